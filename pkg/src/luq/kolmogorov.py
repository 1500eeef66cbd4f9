"""Forward Kolmogorov evolution of densities.

One-dimensional densities are evolved by a conservative finite-volume scheme
with Scharfetter-Gummel (exponentially fitted, Chang-Cooper type) face
fluxes.  Two-dimensional joints come from ensembles through a binned,
FFT-convolved Gaussian KDE.  Marginals, conditionals and conditional
averages of coefficients finish the toolbox.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import StabilityError
from .grid import Grid, GridDensity, trapezoid_weights
from .sde import SdeModel, strat_to_ito

COND_FLOOR = 1e-10


def _bernoulli(w):
    """B(w) = w / (e^w - 1), with B(0) = 1."""
    w = np.asarray(w, dtype=float)
    out = np.ones_like(w)
    nz = np.abs(w) > 1e-12
    with np.errstate(over="ignore"):
        out[nz] = w[nz] / np.expm1(w[nz])
    return out


@dataclass
class FpeSolution:
    grid: Grid
    snapshots: list          # [(t, GridDensity)]
    model_tag: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([t for t, _ in self.snapshots])

    @property
    def densities(self):
        return [d for _, d in self.snapshots]

    def at(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[k][1]

    @property
    def final(self):
        return self.snapshots[-1][1]

    def to_csv(self, directory, stem="fpe"):
        os.makedirs(directory, exist_ok=True)
        paths = []
        for k, (t, d) in enumerate(self.snapshots):
            p = os.path.join(directory, f"{stem}_{k:03d}.csv")
            d.to_csv(p)
            paths.append(p)
        with open(os.path.join(directory, f"{stem}_diagnostics.json"), "w", encoding="utf-8") as fh:
            json.dump({**self.diagnostics, "times": self.times.tolist(), "model": self.model_tag},
                      fh, indent=2, sort_keys=True)
        return paths


class _FluxOperator:
    """Face coefficients of J_{i+1/2} = cl_i rho_i - cr_i rho_{i+1}."""

    def __init__(self, model, grid):
        self.model, self.grid = model, grid
        x = grid.x
        self.h = grid.spacing[0]
        self.xf = 0.5 * (x[1:] + x[:-1])
        self.w = grid.weights()

    def coefficients(self, t):
        m, h = self.model, self.h
        x = self.grid.x
        an = m.a1(t, x)
        if np.any(an < -1e-14):
            raise ValueError("diffusion coefficient a = sigma sigma^T is negative")
        af = m.a1(t, self.xf)
        bf = m.b1(t, self.xf)
        A = bf - 0.5 * (an[1:] - an[:-1]) / h
        D = 0.5 * af
        cl = np.where(A > 0, A, 0.0)
        cr = np.where(A < 0, -A, 0.0)
        diff = D > 1e-300
        if np.any(diff):
            wpe = A[diff] * h / D[diff]
            cl[diff] = D[diff] / h * _bernoulli(-wpe)
            cr[diff] = D[diff] / h * _bernoulli(wpe)
        return cl, cr, float(np.max(an, initial=0.0))

    def rhs(self, rho, cl, cr):
        J = cl * rho[:-1] - cr * rho[1:]
        div = np.zeros_like(rho)
        div[:-1] += J
        div[1:] -= J
        return -div / self.w

    def max_dt(self, cl, cr, amax):
        # positivity of the explicit step: dt * outflow rate <= 0.9
        out = np.zeros(self.grid.n[0])
        out[:-1] += cl
        out[1:] += cr
        rate = float(np.max(out / self.w))
        lim = [0.9 / rate] if rate > 0 else []
        if amax > 0:
            lim.append(0.4 * self.h**2 / amax)
        return min(lim) if lim else np.inf


def fpe_solve(model: SdeModel, rho0: GridDensity, t0, t1, dt=None, record_times=None):
    """Evolve rho0 under the forward Kolmogorov equation of a 1-D model.

    Parameters
    ----------
    dt : float, optional
        Explicit step.  If it exceeds the stability limit a StabilityError
        carrying the admissible step is raised.  None picks the largest
        admissible step.
    record_times : sequence, optional
        Snapshot times in [t0, t1], hit exactly.  Default (t0, t1).
    """
    if model.dim != 1 or rho0.grid.dims != 1:
        raise ValueError("fpe_solve handles 1-D models on 1-D grids")
    model = strat_to_ito(model)
    op = _FluxOperator(model, rho0.grid)
    cl, cr, amax = op.coefficients(t0)
    dt_max = op.max_dt(cl, cr, amax)
    if dt is None:
        dt = 0.99 * dt_max
    elif dt > dt_max * (1 + 1e-12):
        raise StabilityError(f"dt={dt:g} exceeds the explicit stability limit {dt_max:g}", dt_max)
    rt = sorted(set([float(t0)] + [float(t) for t in (record_times if record_times is not None else [t1])]))
    if rt[0] < t0 - 1e-12 or rt[-1] > t1 + 1e-12:
        raise ValueError("record times must lie in [t0, t1]")
    rho = np.array(rho0.values, dtype=float)
    w = op.w
    m0 = float(np.sum(w * rho))
    snaps = [(float(t0), rho0.with_time(float(t0)))]
    t = float(t0)
    n_total, max_step_drift, min_val = 0, 0.0, float(rho.min())
    for tr in rt[1:]:
        span = tr - t
        n = max(1, math.ceil(span / dt - 1e-9)) if span > 0 else 0
        h = span / n if n else 0.0
        for _ in range(n):
            if model.time_dependent:
                cl, cr, amax = op.coefficients(t)
                if h > op.max_dt(cl, cr, amax) * (1 + 1e-12):
                    raise StabilityError(f"dt={h:g} unstable at t={t:g}", op.max_dt(cl, cr, amax))
            before = float(np.sum(w * rho))
            rho = rho + h * op.rhs(rho, cl, cr)
            max_step_drift = max(max_step_drift, abs(float(np.sum(w * rho)) - before))
            t += h
            n_total += 1
        min_val = min(min_val, float(rho.min()))
        t = tr
        snaps.append((tr, GridDensity(rho0.grid, np.clip(rho, 0.0, None), tr)))
    diag = {
        "dt": float(dt), "dt_max": float(dt_max), "steps": n_total,
        "mass_initial": m0, "mass_final": float(np.sum(w * rho)),
        "mass_drift": abs(float(np.sum(w * rho)) - m0), "max_step_mass_drift": max_step_drift,
        "min_value": min_val, "nodes": rho0.grid.n[0], "scheme": "scharfetter-gummel explicit",
    }
    return FpeSolution(rho0.grid, snaps, model.tag, diag)


# kernel density estimation -----------------------------------------------

def silverman_bandwidth(states, weights=None):
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.shape[0] == 1 and X.shape[1] > 1 and weights is None:
        X = X.T
    N, d = X.shape
    if weights is None:
        sd = X.std(axis=0, ddof=1)
    else:
        w = np.asarray(weights, dtype=float) / np.sum(weights)
        mu = w @ X
        sd = np.sqrt(w @ (X - mu) ** 2)
    return sd * (4.0 / ((d + 2) * N)) ** (1.0 / (d + 4))


def _linear_bin(X, lo, h, shape, weights):
    """Linear binning onto a uniform lattice; points outside are dropped."""
    d = X.shape[1]
    pos = (X - lo) / h
    inside = np.all((pos >= 0) & (pos <= np.array(shape) - 1), axis=1)
    pos, wts = pos[inside], weights[inside]
    base = np.minimum(np.floor(pos).astype(int), np.array(shape) - 2)
    frac = pos - base
    out = np.zeros(shape)
    for corner in range(2 ** d):
        bits = [(corner >> k) & 1 for k in range(d)]
        idx = tuple(base[:, k] + bits[k] for k in range(d))
        wc = wts.copy()
        for k in range(d):
            wc *= frac[:, k] if bits[k] else (1 - frac[:, k])
        np.add.at(out, idx, wc)
    return out, float(inside.mean()) if inside.size else 0.0


def _kde_direct(X, grid, h, wts):
    """Exact Gaussian sums at the nodes; keeps far tails accurate (no truncation,
    no FFT round-off)."""
    dens = np.zeros(grid.shape)
    axes = grid.axes
    step = max(1, int(2e6 // max(1, int(np.prod(grid.shape)))))
    for s in range(0, X.shape[0], step):
        blk = X[s:s + step]
        kers = [np.exp(-0.5 * ((axes[k][None, :] - blk[:, k, None]) / h[k]) ** 2) for k in range(X.shape[1])]
        if X.shape[1] == 1:
            dens += wts[s:s + step] @ kers[0]
        else:
            dens += np.einsum("n,ni,nj->ij", wts[s:s + step], kers[0], kers[1])
    return dens


def kde_estimate(states, grid: Grid, bandwidth=None, weights=None, time=None, return_info=False,
                 method="binned"):
    """Gaussian KDE on the grid nodes.

    Points are linearly binned onto a lattice refined so that its spacing is at
    most h/8 per axis, convolved with the Gaussian kernel by FFT, read back at
    the grid nodes, clipped at 0 and renormalized.

    Parameters
    ----------
    states : (N, d) array
    bandwidth : None, float or sequence
        Per-axis standard deviation of the kernel.  None uses Silverman's rule.
    weights : (N,) array, optional
        Nonnegative point weights (bootstrap resampling uses multinomial counts).
    method : {"binned", "direct"}
        "direct" sums the untruncated kernel over every point; slower but
        accurate far into the tails.
    """
    X = np.asarray(states, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N, d = X.shape
    if d != grid.dims:
        raise ValueError("state dimension does not match the grid")
    if N < 2:
        raise ValueError("need at least two points")
    wts = np.ones(N) if weights is None else np.asarray(weights, dtype=float)
    if bandwidth is None:
        h = silverman_bandwidth(X, None if weights is None else wts)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,)).copy()
    if not np.all(h > 0):
        raise ValueError(f"degenerate bandwidth {h}")
    if method == "direct":
        lo, hi = np.array(grid.lo), np.array(grid.hi)
        frac_in = float(np.all((X >= lo) & (X <= hi), axis=1).mean())
        if frac_in == 0:
            raise ValueError("all points fall outside the grid")
        out = GridDensity.from_values(grid, _kde_direct(X, grid, h, wts), time)
        if return_info:
            return out, {"bandwidth": h.tolist(), "fraction_inside": frac_in, "method": "direct", "n": N}
        return out
    sp = np.array(grid.spacing)
    r = np.maximum(1, np.ceil(sp / (h / 8.0)).astype(int))
    fshape = tuple(int((n - 1) * k + 1) for n, k in zip(grid.n, r))
    fh = sp / r
    binned, frac_in = _linear_bin(X, np.array(grid.lo), fh, fshape, wts)
    if binned.sum() <= 0:
        raise ValueError("all points fall outside the grid")
    dens = binned
    for k in range(d):
        half = int(math.ceil(5 * h[k] / fh[k]))
        u = np.arange(-half, half + 1) * fh[k]
        ker = np.exp(-0.5 * (u / h[k]) ** 2)
        ker /= ker.sum()
        shp = [1] * d
        shp[k] = ker.size
        dens = fftconvolve(dens, ker.reshape(shp), mode="same")
    sl = tuple(slice(None, None, int(k)) for k in r)
    vals = np.clip(dens[sl], 0.0, None)
    out = GridDensity.from_values(grid, vals, time)
    if return_info:
        return out, {"bandwidth": h.tolist(), "fraction_inside": frac_in, "refine": r.tolist(),
                     "method": "binned", "n": N}
    return out


# joints, marginals, conditionals --------------------------------------

def marginalize(joint: GridDensity, axis=1):
    """Integrate a 2-D density over `axis` (default: drop y, keep x)."""
    if joint.grid.dims != 2:
        raise ValueError("marginalize expects a 2-D density")
    g = joint.grid
    keep = 1 - axis
    w = trapezoid_weights(g.n[axis], g.spacing[axis])
    vals = np.tensordot(np.asarray(joint.values), w, axes=([axis], [0]))
    g1 = Grid.line(g.lo[keep], g.hi[keep], g.n[keep])
    return GridDensity.from_values(g1, vals, joint.time)


@dataclass(frozen=True)
class ConditionalField:
    """rho(y | x) on a 2-D grid; column i is the density in y given x_i."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray       # (nx, ny); zero in undefined columns
    defined: np.ndarray      # (nx,) bool
    marginal: GridDensity

    def weights_y(self):
            return trapezoid_weights(self.y.size, self.y[1] - self.y[0])

    def column_mass(self):
        return self.values @ self.weights_y()

    def expect(self, f_y):
        """Column-wise E[f(Y) | x]; NaN in undefined columns."""
        fy = np.asarray(f_y(self.y) if callable(f_y) else f_y, dtype=float)
        out = (self.values * fy) @ self.weights_y() if fy.ndim == 1 else np.sum(self.values * fy * self.weights_y(), axis=1)
        return np.where(self.defined, out, np.nan)


def conditional(joint: GridDensity, axis=1, floor=COND_FLOOR):
    """Column-normalized slices rho(y | x).  `axis` is the conditioned-on
    variable's complement: axis=1 gives densities in y for each x."""
    if joint.grid.dims != 2:
        raise ValueError("conditional expects a 2-D density")
    v = np.asarray(joint.values)
    if axis == 0:
        v = v.T
    g = joint.grid
    kx, ky = (0, 1) if axis == 1 else (1, 0)
    x, y = g.axes[kx], g.axes[ky]
    marg = marginalize(joint, axis=ky)
    wy = trapezoid_weights(y.size, g.spacing[ky])
    raw = v @ wy
    ok = marg.values >= floor
    vals = np.zeros_like(v)
    vals[ok] = v[ok] / raw[ok, None]
    return ConditionalField(x, y, vals, ok, marg)


def effective_coefficients(b_joint, sigma_joint, cond: ConditionalField, t=0.0, component=0, columns=None):
    """Conditional averages of the joint coefficients over y given x.

    `b_joint(t, X)` and `sigma_joint(t, X)` are model-style callables on
    (N, 2) states (an SdeModel may be passed as `b_joint` with
    `sigma_joint=None`).  Returns (b_eff, sigma_eff) with shapes (nx,) and
    (nx, m); undefined columns are NaN.  Requesting an undefined column by
    index in `columns` raises ValueError.
    """
    if isinstance(b_joint, SdeModel):
        model = b_joint
        b_joint, sigma_joint = model.b, model.sigma
    xx, yy = np.meshgrid(cond.x, cond.y, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    nx, ny = xx.shape
    b = np.asarray(b_joint(t, pts))[:, component].reshape(nx, ny)
    s = np.asarray(sigma_joint(t, pts))[:, component, :].reshape(nx, ny, -1)
    wy = cond.weights_y()
    P = cond.values * wy
    b_eff = np.sum(P * b, axis=1)
    s_eff = np.einsum("ij,ijk->ik", P, s)
    b_eff = np.where(cond.defined, b_eff, np.nan)
    s_eff = np.where(cond.defined[:, None], s_eff, np.nan)
    if columns is not None:
        cols = np.atleast_1d(columns)
        if not np.all(cond.defined[cols]):
            raise ValueError(f"conditional undefined at requested columns {cols[~cond.defined[cols]].tolist()}")
        return b_eff[cols], s_eff[cols]
    return b_eff, s_eff


def l1_error(d: GridDensity, f):
    """int |rho - f| for an analytic density f on the same grid."""
    return d.grid.integrate(np.abs(np.asarray(d.values) - d.grid.evaluate(f)))
