"""Finite-time divergence rates.

D^{t-t0}(mu_t || mu_t0) = D(mu_t || mu_t0) / |t - t0|, the difference bound
between two evolutions started from a common density, FTDR fields of the
centred flow x -> phi(x + v) - phi(x), and the finite-marginal bound.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .divergence import PhiFunction, divergence
from .errors import InfiniteDivergenceError
from .grid import Grid
from .kolmogorov import kde_estimate, silverman_bandwidth
from .sde import RngSpec, SdeModel, integrate_em

LOCAL_NODES = 201
BOOT = 20


def ftdr(phi: PhiFunction, mu_t, mu_t0, t, t0):
    """D_phi(mu_t || mu_t0) / |t - t0|."""
    if t == t0:
        raise ValueError("t and t0 must differ")
    return divergence(phi, mu_t, mu_t0) / abs(t - t0)


@dataclass
class FtdrCheck:
    lhs: float
    rhs: float
    margin: float
    status: str          # "holds", "violated" or "inconclusive"
    terms: dict = field(default_factory=dict)

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "status": self.status, **self.terms}


def ftdr_bound_check(phi: PhiFunction, mu_t, nu_t, mu_t0, tol=1e-3):
    """D(mu_t || nu_t) against |D(mu_t || mu_t0) - D(nu_t || mu_t0)|.

    Both sides carry the same 1/|t - t0| factor, so raw divergences are
    compared.  An infinite term makes the check inconclusive.
    """
    lhs = divergence(phi, mu_t, nu_t)
    dm = divergence(phi, mu_t, mu_t0)
    dn = divergence(phi, nu_t, mu_t0)
    terms = {"d_mu_mu0": dm, "d_nu_mu0": dn}
    if not all(np.isfinite([lhs, dm, dn])):
        return FtdrCheck(lhs, np.nan, np.nan, "inconclusive", terms)
    rhs = abs(dm - dn)
    margin = rhs - lhs
    return FtdrCheck(lhs, rhs, margin, "holds" if margin >= -tol else "violated", terms)


# fields ----------------------------------------------------------------

def sample_ball(gen, n, d, eps):
    """Uniform samples in the closed eps-ball of R^d (d = 1 or 2)."""
    if d == 1:
        return gen.uniform(-eps, eps, size=(n, 1))
    r = eps * np.sqrt(gen.uniform(0.0, 1.0, size=n))
    th = gen.uniform(0.0, 2 * np.pi, size=n)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def local_grid(clouds, n=LOCAL_NODES, width=6.0):
    """Grid centred on the first cloud spanning +-width/2 standard deviations
    of the widest cloud, per axis."""
    c = clouds[0].mean(axis=0)
    sd = np.max([X.std(axis=0) for X in clouds], axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    half = 0.5 * width * sd
    d = clouds[0].shape[1]
    return Grid(tuple(c - half), tuple(c + half), (n,) * d)


def _pair_kl(phi, V, P, grid, weights=None, h=None):
    hv = silverman_bandwidth(V, weights) if h is None else h[0]
    hp = silverman_bandwidth(P, weights) if h is None else h[1]
    r0 = kde_estimate(V, grid, bandwidth=hv, weights=weights, method="direct")
    r1 = kde_estimate(P, grid, bandwidth=hp, weights=weights, method="direct")
    return divergence(phi, r1, r0), (hv, hp)


@dataclass
class FtdrField:
    seeds: np.ndarray        # (S, d)
    values: np.ndarray       # (S,)
    stderr: np.ndarray       # (S,) bootstrap standard errors
    phi: str
    eps_ball: float
    t0: float
    t: float
    n: int
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path):
        d = self.seeds.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"][:d] + ["ftdr", "stderr"])
            for s, v, e in zip(self.seeds, self.values, self.stderr):
                w.writerow([repr(float(c)) for c in s] + [repr(float(v)), repr(float(e))])


def ftdr_field(model: SdeModel, phi: PhiFunction, seeds, eps_ball, t0, t, N, rng: RngSpec,
               dt=1e-3, n_boot=BOOT, workers=None, width=6.0):
    """FTDR of the centred flow at each seed point.

    For every seed x the ball offsets v (uniform, radius eps_ball) and the
    Wiener increments are the same: the pair (x + v, x) is driven by one
    substream per offset, and the same substreams are reused across seeds
    (common random numbers), so differences between seeds reflect the
    dynamics rather than sampling.  Both the initial offsets and the evolved
    displacements are turned into densities by a direct Gaussian KDE
    (Silverman bandwidth) on a 201-node local grid per axis.
    """
    if eps_ball <= 0:
        raise ValueError("eps_ball must be positive")
    if N < 1000:
        raise ValueError("N must be at least 1000")
    if t == t0:
        raise ValueError("t and t0 must differ")
    seeds = np.asarray(seeds, dtype=float)
    if seeds.ndim == 1:
        seeds = seeds[:, None]
    if seeds.shape[1] != model.dim:
        raise ValueError("seed dimension does not match the model")
    d = model.dim
    V = sample_ball(rng.substream(1).generator(0), N, d, eps_ball)
    boot_gen = rng.substream(2).generator(0)
    boots = boot_gen.multinomial(N, np.full(N, 1.0 / N), size=n_boot).astype(float)
    vals, errs, meta = [], [], []
    for x in seeds:
        ea = integrate_em(model, x + V, t0, t, dt, rng, workers=workers)
        eb = integrate_em(model, np.broadcast_to(x, V.shape).copy(), t0, t, dt, rng, workers=workers)
        P = ea.states[-1] - eb.states[-1]
        if np.max(np.abs(P - V)) == 0.0:
            # identity flow
            vals.append(0.0)
            errs.append(0.0)
            meta.append({"bandwidth": None})
            continue
        grid = local_grid([P, V], width=width)
        D, h = _pair_kl(phi, V, P, grid)
        if not np.isfinite(D):
            raise InfiniteDivergenceError(f"FTDR divergence infinite at seed {x.tolist()}")
        bs = []
        for w in boots:
            Db, _ = _pair_kl(phi, V, P, grid, weights=w, h=h)
            bs.append(Db)
        vals.append(D / abs(t - t0))
        errs.append(float(np.std(bs, ddof=1)) / abs(t - t0))
        meta.append({"bandwidth": [np.asarray(h[0]).tolist(), np.asarray(h[1]).tolist()],
                     "grid_lo": list(grid.lo), "grid_hi": list(grid.hi)})
    return FtdrField(seeds, np.array(vals), np.array(errs), phi.label, float(eps_ball), float(t0),
                     float(t), int(N), {"per_seed": meta, "dt": dt, "n_boot": n_boot,
                                        "ball": "uniform", "local_nodes": LOCAL_NODES})


# finite-marginal bound ------------------------------------------------------

@dataclass
class PathspaceBound:
    value: float
    first_sum: list
    second_sum: list
    times: list

    def to_dict(self):
        return {"value": self.value, "first_sum": self.first_sum, "second_sum": self.second_sum,
                "times": self.times}


def pathspace_marginal_bound(phi: PhiFunction, mus, nus, mu_t0, times):
    """Finite-marginal bound

        sum_i |D^{tn-t0}(mu_i || mu_0) - D^{tn-t0}(nu_i || mu_0)|
      + sum_i (|tn - ti| / |tn - t0|) |D^{ti-t0}(mu_i || mu_0) - D^{ti-t0}(nu_i || mu_0)|

    with D^{s} = D / s.  `times` is (t0, t1, ..., tn) and `mus`, `nus` hold
    the n densities at t1..tn.
    """
    times = [float(s) for s in times]
    t0, ts = times[0], times[1:]
    if len(ts) != len(mus) or len(ts) != len(nus) or not ts:
        raise ValueError("need one mu and one nu per time after t0")
    if any(b < a for a, b in zip(times[:-1], times[1:])) or ts[0] <= t0:
        raise ValueError("times must be ordered with t1 > t0")
    tn = ts[-1]
    first, second = [], []
    for ti, m, n in zip(ts, mus, nus):
        dm, dn = divergence(phi, m, mu_t0), divergence(phi, n, mu_t0)
        if not (np.isfinite(dm) and np.isfinite(dn)):
            raise InfiniteDivergenceError(f"infinite divergence at t={ti}")
        first.append(abs(dm - dn) / abs(tn - t0))
        second.append(abs(tn - ti) / abs(tn - t0) * abs(dm - dn) / abs(ti - t0))
    return PathspaceBound(float(sum(first) + sum(second)), first, second, ts)
