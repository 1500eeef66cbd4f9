"""Reconstructed vector field and the divergence bound it controls.

With h = b - (1/2) a' (b the Ito drift), the density of mu solves the
nu-equation up to a first-order correction.  We store

    Theta = 1/2 (a_mu - a_nu) d_x log rho_mu + (h_nu - h_mu),

so that Theta = b_nu - b_mu whenever the diffusions agree.  The divergence
at time t is then bounded by

    1/2 int_t0^t int |sigma_nu^+ Theta|^2 phi''(eta) eta^2 rho_nu dx ds,

eta = rho_mu / rho_nu, with sigma^+ the pseudo-inverse below.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .divergence import PhiFunction, divergence
from .errors import CapabilityError
from .grid import GridDensity
from .sde import SdeModel

LOG_FLOOR = 1e-12


def tensor_pseudo_inverse(sigma, rcond=1e-10):
    """Moore-Penrose inverse as the limit eps -> 0 of (s^T s + eps I)^{-1} s^T.

    With s = U diag(sv) V^T the regularized inverse is V diag(sv / (sv^2 + eps)) U^T,
    so the limit is taken exactly in the SVD: singular values below
    rcond * max are the ones the regularization sends to zero.  Accepts
    (d, m) or batched (..., d, m); returns (..., m, d).  A zero matrix maps
    to the zero transpose.
    """
    s = np.asarray(sigma, dtype=float)
    if s.ndim < 2:
        raise ValueError("sigma must be at least 2-D")
    if not np.all(np.isfinite(s)):
        raise ValueError("sigma has non-finite entries")
    U, sv, Vt = np.linalg.svd(s, full_matrices=False)
    top = np.max(sv, axis=-1, keepdims=True) if sv.shape[-1] else sv
    keep = (sv > rcond * top) & (top > 0)
    inv = np.where(keep, 1.0 / np.where(keep, sv, 1.0), 0.0)
    return np.swapaxes(Vt, -1, -2) @ (inv[..., :, None] * np.swapaxes(U, -1, -2))


def regularized_pseudo_inverse(sigma, eps):
    """(s^T s + eps I)^{-1} s^T for eps > 0."""
    s = np.asarray(sigma, dtype=float)
    m = s.shape[-1]
    st = np.swapaxes(s, -1, -2)
    return np.linalg.solve(st @ s + eps * np.eye(m), st)


def _as_series(rho):
    """Normalize the accepted density-series inputs to [(t, GridDensity)]."""
    if hasattr(rho, "snapshots"):
        return list(rho.snapshots)
    if isinstance(rho, GridDensity):
        return [(rho.time, rho)]
    out = []
    for item in rho:
        if isinstance(item, GridDensity):
            out.append((item.time, item))
        else:
            out.append((float(item[0]), item[1]))
    return out


def _h(model: SdeModel, t, x):
    """h = b_ito - a'/2, written as b - (1/2) sum_k sigma_k sigma_k' for
    Stratonovich models."""
    dx = 1e-5 * np.maximum(1.0, np.abs(x))
    if model.calculus == "stratonovich":
        ds = (model.sigma1(t, x + dx) - model.sigma1(t, x - dx)) / (2 * dx)[:, None]
        return model.b1(t, x) - 0.5 * np.sum(model.sigma1(t, x) * ds, axis=1)
    da = (model.a1(t, x + dx) - model.a1(t, x - dx)) / (2 * dx)
    return model.b1(t, x) - 0.5 * da


def log_gradient(rho: GridDensity, floor=LOG_FLOOR):
    """Central-difference d_x log rho and the mask of nodes above the floor."""
    v = np.asarray(rho.values)
    ok = v >= floor * v.max()
    lv = np.log(np.where(ok, v, floor * v.max()))
    g = np.gradient(lv, rho.grid.spacing[0], edge_order=2)
    # a stencil that touches a floored node is unreliable
    nb = ok.copy()
    nb[1:] &= ok[:-1]
    nb[:-1] &= ok[1:]
    return np.where(nb, g, 0.0), nb


@dataclass
class ThetaField:
    grid: object
    times: np.ndarray
    theta: np.ndarray            # (K, n)
    diffusion_term: np.ndarray   # 1/2 (a_mu - a_nu) dlog rho_mu
    drift_term: np.ndarray       # h_nu - h_mu
    valid: np.ndarray            # (K, n) bool

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "theta", "diffusion_term", "drift_term", "valid"])
            x = self.grid.x
            for k, t in enumerate(self.times):
                for i in range(x.size):
                    w.writerow([repr(float(t)), repr(float(x[i])), repr(float(self.theta[k, i])),
                                repr(float(self.diffusion_term[k, i])), repr(float(self.drift_term[k, i])),
                                int(self.valid[k, i])])


def theta_field(model_mu: SdeModel, model_nu: SdeModel, rho_mu, t=None):
    """Theta on the grid of rho_mu for every snapshot (or only the one nearest t)."""
    series = _as_series(rho_mu)
    if t is not None:
        k = int(np.argmin([abs(s - t) for s, _ in series]))
        series = [series[k]]
    grid = series[0][1].grid
    if grid.dims != 1:
        raise ValueError("theta_field works on 1-D grids")
    x = grid.x
    K, n = len(series), x.size
    th, dterm, hterm = np.zeros((K, n)), np.zeros((K, n)), np.zeros((K, n))
    valid = np.zeros((K, n), dtype=bool)
    for k, (s, rho) in enumerate(series):
        if not np.any(np.asarray(rho.values) > 0):
            raise ValueError(f"rho_mu vanishes at t={s}")
        am, an = model_mu.a1(s, x), model_nu.a1(s, x)
        hdiff = _h(model_nu, s, x) - _h(model_mu, s, x)
        if np.array_equal(am, an):
            # no log-gradient term at all; avoid touching the density
            d = np.zeros(n)
            ok = np.ones(n, dtype=bool)
            if model_mu.calculus == model_nu.calculus:
                hdiff = model_nu.b1(s, x) - model_mu.b1(s, x)
        else:
            lg, ok = log_gradient(rho)
            d = 0.5 * (am - an) * lg
        th[k], dterm[k], hterm[k], valid[k] = d + hdiff, d, hdiff, ok
    times = np.array([s for s, _ in series], dtype=float)
    return ThetaField(grid, times, th, dterm, hterm, valid)


@dataclass
class ReconstructionBound:
    lhs: float
    rhs: float
    margin: float
    phi: str
    t0: float
    t: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "phi": self.phi,
                "t0": self.t0, "t": self.t, **self.metadata}


def _sigma_rows(sigma_nu, s, x):
    if isinstance(sigma_nu, SdeModel):
        return sigma_nu.sigma1(s, x)
    v = np.asarray(sigma_nu(s, x) if callable(sigma_nu) else sigma_nu, dtype=float)
    if v.ndim == 0:
        v = np.full((x.size, 1), float(v))
    elif v.ndim == 1:
        v = np.broadcast_to(v, (x.size, v.size)) if v.size != x.size else v[:, None]
    return v


def bound_integrand(phi: PhiFunction, rho_mu: GridDensity, rho_nu: GridDensity, theta, valid, sigma_rows):
    """Nodewise 1/2 |sigma^+ Theta|^2 eta^2 phi''(eta) rho_nu (zero off `valid`)."""
    phi.require_d2phi("the reconstruction bound")
    rm, rn = np.asarray(rho_mu.values), np.asarray(rho_nu.values)
    ok = valid & (rn > 0)
    eta = np.where(ok, rm / np.where(ok, rn, 1.0), 1.0)
    pinv = tensor_pseudo_inverse(sigma_rows[:, None, :])[:, :, 0]    # (n, m)
    q = np.sum((pinv * np.asarray(theta)[:, None]) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = phi.u2d2phi(eta)
    out = 0.5 * q * w * rn
    return np.where(ok & np.isfinite(out), out, 0.0)


def divergence_bound_reconstruction(phi: PhiFunction, rho_mu, rho_nu, theta: ThetaField, sigma_nu,
                                    t0=None, t=None, min_snapshots=20):
    """Right-hand side of the reconstruction bound and the divergence it controls.

    The time integral is the trapezoid over the snapshots in [t0, t].  The
    result carries the relative change when every other snapshot is dropped
    (`refinement_change`) as a quadrature diagnostic.
    """
    if not phi.has_d2phi:
        raise CapabilityError(f"the reconstruction bound needs phi''; {phi.label} has none")
    sm, sn = _as_series(rho_mu), _as_series(rho_nu)
    tm = np.array([s for s, _ in sm], dtype=float)
    tn = np.array([s for s, _ in sn], dtype=float)
    if tm.size != tn.size or np.max(np.abs(tm - tn)) > 1e-9 or tm.size != theta.times.size:
        raise ValueError("rho_mu, rho_nu and theta must share snapshot times")
    t0 = tm[0] if t0 is None else t0
    t = tm[-1] if t is None else t
    sel = np.flatnonzero((tm >= t0 - 1e-12) & (tm <= t + 1e-12))
    if sel.size < min_snapshots:
        raise ValueError(f"{sel.size} snapshots in [t0, t]; at least {min_snapshots} are required")
    x = sm[0][1].grid.x
    w = sm[0][1].grid.weights()
    I = np.array([np.sum(w * bound_integrand(phi, sm[k][1], sn[k][1], theta.theta[k], theta.valid[k],
                                             _sigma_rows(sigma_nu, tm[k], x))) for k in sel])
    ts = tm[sel]
    rhs = _trap(I, ts)
    coarse = sel[::2] if (sel.size - 1) % 2 == 0 else None
    change = None
    if coarse is not None and coarse.size >= 2:
        rc = float(_trap(I[::2], ts[::2]))
        change = abs(rc - rhs) / max(abs(rhs), 1e-300)
    lhs = divergence(phi, sm[sel[-1]][1], sn[sel[-1]][1])
    meta = {"snapshots": int(sel.size), "grid_n": int(x.size), "refinement_change": change,
            "integrand": I.tolist(), "times": ts.tolist()}
    return ReconstructionBound(float(lhs), rhs, rhs - float(lhs), phi.label, float(ts[0]), float(ts[-1]), meta)


def _trap(y, x):
    y, x = np.asarray(y), np.asarray(x)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))
