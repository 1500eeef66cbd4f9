"""Closed-form Gaussian references shared by the tests."""
import math

import numpy as np
from scipy.special import log_ndtr

from luq.grid import gaussian_density


def gauss_kl(m1, v1, m2, v2):
    """KL(N(m1, v1) || N(m2, v2))."""
    return 0.5 * (v1 / v2 + (m1 - m2) ** 2 / v2 - 1 + math.log(v2 / v1))


def ou_moments(beta, sigma, m0, v0, t):
    e1, e2 = math.exp(-beta * t), math.exp(-2 * beta * t)
    return m0 * e1, v0 * e2 + sigma**2 / (2 * beta) * (1 - e2)


# (beta_mu, beta_nu, sigma_mu, sigma_nu, m0, v0, t)
OU_SUITE = [
    (1.0, 2.0, math.sqrt(2.0), math.sqrt(2.0), 0.0, 1.0, 0.5),
    (1.0, 1.5, 1.0, 1.0, 0.5, 0.25, 1.0),
    (0.5, 1.0, math.sqrt(2.0), math.sqrt(2.0), 1.0, 0.5, 1.0),
    (2.0, 1.0, 1.0, 1.0, -0.5, 1.0, 0.8),
    (1.0, 1.0, 1.0, 1.5, 0.0, 0.5, 1.0),
]


def ou_series(grid, beta, sigma, m0, v0, times):
    out = []
    for t in times:
        m, v = ou_moments(beta, sigma, m0, v0, t)
        out.append(gaussian_density(grid, m, v, t))
    return out


def smoothed_box_logpdf(x, half, h):
    """log density of U(-half, half) convolved with N(0, h^2)."""
    # Phi(a) - Phi(b) = Phi(-b) - Phi(-a); use the side away from 1
    a, b = (x + half) / h, (x - half) / h
    hi = np.where(x <= 0, a, -b)
    lo = np.where(x <= 0, b, -a)
    la, lb = log_ndtr(hi), log_ndtr(lo)
    return la + np.log1p(-np.exp(lb - la)) - math.log(2 * half)


def linear_ftdr_oracle(eps, N, dt, steps):
    """KL rate of the Silverman-KDE-smoothed stretched ball for b = x, sigma = 0
    after `steps` EM steps (total time steps * dt), as a 1-D quadrature."""
    s = (1 + dt) ** steps
    h0 = eps / math.sqrt(3) * (4 / (3 * N)) ** 0.2
    h1 = s * h0
    L = s * eps + 12 * h1
    x = np.linspace(-L, L, 400_001)
    l1 = smoothed_box_logpdf(x, s * eps, h1)
    l0 = smoothed_box_logpdf(x, eps, h0)
    f = np.exp(l1) * (l1 - l0)
    return float(np.trapezoid(f, x) if hasattr(np, "trapezoid") else np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(x))) / (steps * dt)
