"""phi-divergence generators, convex conjugates and divergence evaluation.

Every generator in the catalog is normalized so that phi(1) = 0 and
phi'(1) = 0.  Where the table form does not satisfy the second condition
(the alpha family) the affine part (u - 1) phi'(1) is subtracted, which leaves
the divergence unchanged for probability measures.

Conjugates are given in closed form.  `conjugate_numeric` is the brute-force
Legendre transform used to check them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import CapabilityError, InfiniteDivergenceError
from .grid import (DiscreteDistribution, GridDensity, check_compatible,
                   masses_of, node_values)

ABS_CONT_TOL = 1e-6


@dataclass(frozen=True)
class PhiFunction:
    """A convex generator together with its conjugate.

    Attributes
    ----------
    phi, dphi, d2phi : callable
        Generator and its derivatives on u >= 0.  `d2phi` is None when the
        generator is not twice differentiable (total variation).
    conj, dconj : callable
        Legendre-Fenchel conjugate and its derivative; +inf outside the
        effective domain.
    d2conj0 : float
        Second derivative of the conjugate at 0, i.e. 1/phi''(1).
    u2d2phi : callable or None
        u**2 * phi''(u), the weight entering the reconstruction bound; given
        in closed form so that u = 0 and large u are handled cleanly.
    smooth_conj : bool
        True when the conjugate is differentiable on its domain, which the
        bound machinery needs.
    """

    name: str
    phi: Callable
    dphi: Callable
    d2phi: Callable | None
    conj: Callable
    dconj: Callable
    d2conj0: float
    params: dict = field(default_factory=dict)
    u2d2phi: Callable | None = None
    smooth_conj: bool = True

    @property
    def label(self):
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.name}({inner})"

    @property
    def has_d2phi(self):
        return self.d2phi is not None

    def require_d2phi(self, what="this operation"):
        if self.d2phi is None or self.u2d2phi is None:
            raise CapabilityError(f"{what} needs a twice differentiable generator; {self.label} is not")

    def require_smooth_conj(self, what="this operation"):
        if not self.smooth_conj:
            raise CapabilityError(f"{what} needs a differentiable conjugate; {self.label} has none")

    def phi_at_zero(self):
        with np.errstate(all="ignore"):
            return float(self.phi(np.array(0.0)))


def _arr(u):
    return np.asarray(u, dtype=float)


def _where(cond, a, b):
    # np.where without evaluating warnings in the dead branch
    return np.where(cond, a, b)


def _kl():
    def phi(u):
        u = _arr(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            return _where(u > 0, u * np.log(np.where(u > 0, u, 1.0)) - u + 1.0, 1.0)

    def dphi(u):
        with np.errstate(divide="ignore"):
            return np.log(_arr(u))

    return PhiFunction(
        "kl", phi, dphi, lambda u: 1.0 / _arr(u),
        lambda s: np.expm1(_arr(s)), lambda s: np.exp(_arr(s)), 1.0,
        u2d2phi=lambda u: _arr(u) * 1.0)


def _reverse_kl():
    # alpha = -1 member: -log u + u - 1
    def phi(u):
        u = _arr(u)
        with np.errstate(divide="ignore"):
            return -np.log(u) + u - 1.0

    def conj(s):
        s = _arr(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return _where(s < 1, -np.log(np.where(s < 1, 1 - s, 1.0)), np.inf)

    def dconj(s):
        s = _arr(s)
        with np.errstate(divide="ignore"):
            return _where(s < 1, 1.0 / np.where(s < 1, 1 - s, 1.0), np.inf)

    return phi, (lambda u: 1.0 - 1.0 / _arr(u)), (lambda u: _arr(u) ** -2.0), conj, dconj, \
        (lambda u: np.ones_like(_arr(u)))


def _hellinger():
    def conj(s):
        s = _arr(s)
        return _where(s < 1, s / np.where(s < 1, 1 - s, 1.0), np.inf)

    def dconj(s):
        s = _arr(s)
        return _where(s < 1, np.where(s < 1, 1 - s, 1.0) ** -2.0, np.inf)

    with np.errstate(divide="ignore"):
        return PhiFunction(
            "hellinger",
            lambda u: (np.sqrt(_arr(u)) - 1.0) ** 2,
            lambda u: 1.0 - 1.0 / np.sqrt(_arr(u)),
            lambda u: 0.5 * _arr(u) ** -1.5,
            conj, dconj, 2.0,
            u2d2phi=lambda u: 0.5 * np.sqrt(_arr(u)))


def _tv():
    def conj(s):
        s = _arr(s)
        return np.where(s > 0.5, np.inf, np.where(s < -0.5, -0.5, s))

    def dconj(s):
        s = _arr(s)
        return np.where(s > 0.5, np.inf, np.where(s < -0.5, 0.0, 1.0))

    return PhiFunction(
        "tv", lambda u: 0.5 * np.abs(_arr(u) - 1.0), lambda u: 0.5 * np.sign(_arr(u) - 1.0),
        None, conj, dconj, np.nan, smooth_conj=False)


def _chi2():
    def conj(s):
        s = _arr(s)
        return np.where(s >= -2, s + 0.25 * s * s, -1.0)

    def dconj(s):
        s = _arr(s)
        return np.where(s >= -2, 1.0 + 0.5 * s, 0.0)

    return PhiFunction(
        "chi2", lambda u: (_arr(u) - 1.0) ** 2, lambda u: 2.0 * (_arr(u) - 1.0),
        lambda u: np.full_like(_arr(u), 2.0), conj, dconj, 0.5,
        u2d2phi=lambda u: 2.0 * _arr(u) ** 2)


def _alpha(a):
    if a == 1:
        k = _kl()
        return PhiFunction("alpha", k.phi, k.dphi, k.d2phi, k.conj, k.dconj, 1.0,
                           {"alpha": 1.0}, k.u2d2phi)
    if a == -1:
        phi, dphi, d2phi, conj, dconj, w = _reverse_kl()
        return PhiFunction("alpha", phi, dphi, d2phi, conj, dconj, 1.0, {"alpha": -1.0}, w)

    c = 4.0 / (1.0 - a * a)
    p = 0.5 * (1.0 + a)
    kap = 2.0 / (1.0 - a)
    e_val = (1.0 + a) / (a - 1.0)   # exponent of r in the conjugate
    e_der = 2.0 / (a - 1.0)          # exponent of r in its derivative

    def phi(u):
        u = _arr(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c * (1.0 - u**p) + kap * (u - 1.0)

    def dphi(u):
        with np.errstate(divide="ignore"):
            return -c * p * _arr(u) ** (p - 1.0) + kap

    def d2phi(u):
        with np.errstate(divide="ignore"):
            return _arr(u) ** ((a - 3.0) / 2.0)

    def _r(s):
        return 1.0 - _arr(s) / kap

    def conj(s):
        r = _r(s)
        rp = np.where(r > 0, r, 1.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = (2.0 / (1.0 + a)) * (rp**e_val - 1.0)
        if a > 1:
            return np.where(r > 0, val, -2.0 / (1.0 + a))
        if a < -1:
            # r = 0 is attained in the limit u -> inf
            return np.where(r > 0, val, np.where(r == 0, -2.0 / (1.0 + a), np.inf))
        return np.where(r > 0, val, np.inf)

    def dconj(s):
        r = _r(s)
        rp = np.where(r > 0, r, 1.0)
        with np.errstate(over="ignore"):
            val = rp**e_der
        if a > 1:
            return np.where(r > 0, val, 0.0)
        return np.where(r > 0, val, np.inf)

    with np.errstate(divide="ignore"):
        return PhiFunction("alpha", phi, dphi, d2phi, conj, dconj, 1.0, {"alpha": float(a)},
                           u2d2phi=lambda u: _arr(u) ** ((a + 1.0) / 2.0))


def _chi_alpha(a):
    if a == 2:
        k = _chi2()
        return PhiFunction("chi_alpha", k.phi, k.dphi, k.d2phi, k.conj, k.dconj, 0.5,
                           {"alpha": 2.0}, k.u2d2phi)

    def phi(u):
        return np.abs(_arr(u) - 1.0) ** a

    def dphi(u):
        v = _arr(u) - 1.0
        return a * np.sign(v) * np.abs(v) ** (a - 1.0)

    if a == 1:
        def conj(s):
            s = _arr(s)
            return np.where(s > 1, np.inf, np.where(s < -1, -1.0, s))

        def dconj(s):
            s = _arr(s)
            return np.where(s > 1, np.inf, np.where(s < -1, 0.0, 1.0))

        return PhiFunction("chi_alpha", phi, dphi, None, conj, dconj, np.nan,
                           {"alpha": 1.0}, smooth_conj=False)

    def conj(s):
        s = _arr(s)
        return np.where(s >= -a, s + (a - 1.0) * (np.abs(s) / a) ** (a / (a - 1.0)), -1.0)

    def dconj(s):
        s = _arr(s)
        return np.where(s >= -a, 1.0 + np.sign(s) * (np.abs(s) / a) ** (1.0 / (a - 1.0)), 0.0)

    # phi'' = a(a-1)|u-1|^(a-2) is finite at u = 1 only for a >= 2
    d2 = None
    w = None
    if a > 2:
        d2 = lambda u: a * (a - 1.0) * np.abs(_arr(u) - 1.0) ** (a - 2.0)
        w = lambda u: _arr(u) ** 2 * d2(u)
    d2c0 = np.inf if a > 2 else 0.0
    return PhiFunction("chi_alpha", phi, dphi, d2, conj, dconj, d2c0, {"alpha": float(a)}, w)


CATALOG_NAMES = ("kl", "hellinger", "tv", "chi2", "alpha", "chi_alpha")
CATALOG_DOC = {
    "kl": "u log u - u + 1",
    "hellinger": "(sqrt(u) - 1)^2",
    "tv": "|u - 1| / 2  (divergence only; no bounds)",
    "chi2": "(u - 1)^2",
    "alpha(alpha)": "4/(1-alpha^2) (1 - u^((1+alpha)/2)) + affine normalization; alpha = +-1 give kl / reverse kl",
    "chi_alpha(alpha)": "|u - 1|^alpha, alpha >= 1",
}


def catalog(name, params=None):
    """Return the catalog generator `name`.

    Parameters
    ----------
    name : str
        One of kl, hellinger, tv, chi2, alpha, chi_alpha.
    params : dict or float, optional
        ``{"alpha": a}`` (or just ``a``) for the two parametric families.
    """
    params = params or {}
    if not isinstance(params, dict):
        params = {"alpha": float(params)}
    name = str(name).lower()
    if name == "kl":
        return _kl()
    if name == "hellinger":
        return _hellinger()
    if name == "tv":
        return _tv()
    if name == "chi2":
        return _chi2()
    if name in ("alpha", "chi_alpha"):
        if "alpha" not in params:
            raise ValueError(f"{name} needs parameter 'alpha'")
        a = float(params["alpha"])
        if not np.isfinite(a):
            raise ValueError("alpha must be finite")
        if name == "alpha":
            return _alpha(a)
        if a < 1:
            raise ValueError(f"chi_alpha needs alpha >= 1, got {a}")
        return _chi_alpha(a)
    raise ValueError(f"unknown divergence {name!r}; choose from {CATALOG_NAMES}")


def conjugate_numeric(phi: PhiFunction, s, u_max=1e4, n=20001):
    """Brute-force conjugate sup_u {u s - phi(u)} over a log-spaced u grid.

    The grid maximum is polished with a bounded scalar search between the
    neighbouring grid points.  u = 0 is included when phi(0) is finite.
    """
    if u_max <= 0 or n < 100:
        raise ValueError("need u_max > 0 and n >= 100")
    s = float(s)
    u = np.geomspace(u_max * 1e-12, u_max, int(n))
    with np.errstate(all="ignore"):
        vals = u * s - phi.phi(u)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    best = vals[i]
    lo, hi = u[max(i - 1, 0)], u[min(i + 1, u.size - 1)]
    if np.isfinite(best) and hi > lo:
        def neg(x):
            with np.errstate(all="ignore"):
                v = x * s - float(phi.phi(x))
            return -v if np.isfinite(v) else np.inf
        r = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-14 * max(hi, 1.0)})
        best = max(best, -r.fun)
    f0 = phi.phi_at_zero()
    if np.isfinite(f0):
        best = max(best, -f0)
    return float(best)


def _divergence_from_masses(phi, pm, pn, floor):
    keep = pn > floor
    lost = pm[~keep].sum()
    if lost > ABS_CONT_TOL:
        return np.inf
    u = pm[keep] / pn[keep]
    with np.errstate(all="ignore"):
        terms = phi.phi(u) * pn[keep]
    if np.any(np.isnan(terms)):
        raise FloatingPointError("nan in divergence integrand")
    d = float(terms.sum())
    return max(d, 0.0) if np.isfinite(d) else np.inf


def density_floor(grid):
    return 1e-300 * grid.span


def divergence(phi: PhiFunction, mu: GridDensity, nu: GridDensity):
    """Trapezoidal phi-divergence of two densities sharing a grid.

    Nodes where rho_nu is below 1e-300 times the grid span are dropped; if the
    mu-mass on those nodes exceeds 1e-6 the result is +inf.
    """
    check_compatible(mu, nu)
    keep = np.asarray(nu.values) > density_floor(mu.grid)
    pm, pn = masses_of(mu), masses_of(nu)
    # fold the cutoff into the masses so that both vectors share one mask
    pn = np.where(keep, pn, 0.0)
    return _divergence_from_masses(phi, pm.ravel(), pn.ravel(), 0.0)


def divergence_discrete(phi: PhiFunction, mu: DiscreteDistribution, nu: DiscreteDistribution):
    """sum_i phi(mu_i / nu_i) nu_i; +inf if mu charges a point nu does not."""
    check_compatible(mu, nu)
    pm, pn = masses_of(mu), masses_of(nu)
    if np.any(pm[pn <= 0] > 0):
        return np.inf
    return _divergence_from_masses(phi, pm, pn, 0.0)


def divergence_any(phi, mu, nu):
    if isinstance(mu, GridDensity):
        return divergence(phi, mu, nu)
    return divergence_discrete(phi, mu, nu)


def finite_divergence(phi, mu, nu):
    d = divergence_any(phi, mu, nu)
    if not np.isfinite(d):
        raise InfiniteDivergenceError(
            f"{phi.label} divergence is infinite (mu not absolutely continuous at grid resolution)")
    return d


def coarse_grain(d, partition):
    """Block masses of `d` over a partition of its (flattened) node indices."""
    m = masses_of(d).ravel()
    blocks = [np.asarray(b, dtype=int).ravel() for b in partition]
    allidx = np.concatenate(blocks) if blocks else np.array([], dtype=int)
    if allidx.size != m.size or np.any(np.sort(allidx) != np.arange(m.size)):
        raise ValueError("partition must cover every index exactly once")
    out = np.array([m[b].sum() for b in blocks])
    return DiscreteDistribution(out / out.sum())


def variational_lower_bound(phi: PhiFunction, mu, nu, fs):
    """max over test functions f of E_mu[f] - E_nu[phi*(f)].

    Each `f` is an array of node values or a callable evaluated on the nodes.
    Never exceeds the divergence (weak duality).
    """
    check_compatible(mu, nu)
    pm, pn = masses_of(mu), masses_of(nu)
    best = -np.inf
    for f in fs:
        fv = np.asarray(node_values(mu, f), dtype=float)
        if not np.all(np.isfinite(fv)):
            raise ValueError("test functions must be finite on the nodes")
        cf = np.asarray(phi.conj(fv), dtype=float)
        charged = pn > 0
        if np.any(~np.isfinite(cf[charged])):
            continue
        val = float(np.sum(pm * fv) - np.sum(pn[charged] * cf[charged]))
        best = max(best, val)
    return best
