"""SDE models, Stratonovich to Ito conversion, Euler-Maruyama ensembles.

Randomness is per trajectory: trajectory i of a run with master seed s uses

    Generator(Philox(SeedSequence(s, spawn_key=(stream, i))))

and draws, in order, its initial state (only when the initial condition is a
sampler) and then a (n_steps, m) block of standard normals.  Chunks of
trajectories are fixed in advance, so the result does not depend on how many
workers run them.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import SimulationError

CHUNK_BYTES = 64 * 2**20


@dataclass(frozen=True)
class SdeModel:
    """dX = b(t, X) dt + sigma(t, X) dW  (or the Stratonovich form).

    `drift(t, X)` maps (N, d) states to (N, d); `diffusion(t, X)` to
    (N, d, m).  `diffusion_jacobian(t, X)`, when given, returns
    J[n, i, k, j] = d sigma_ik / d x_j.
    """

    dim: int
    noise_dim: int
    drift: Callable
    diffusion: Callable
    calculus: str = "ito"
    diffusion_jacobian: Callable | None = None
    name: str = "model"
    params: dict = field(default_factory=dict)
    additive: bool = False
    time_dependent: bool = False

    def __post_init__(self):
        if self.calculus not in ("ito", "stratonovich"):
            raise ValueError("calculus must be 'ito' or 'stratonovich'")

    @property
    def tag(self):
        if not self.params:
            return self.name
        return self.name + "(" + ",".join(f"{k}={v}" for k, v in sorted(self.params.items())) + ")"

    def b(self, t, X):
        return np.asarray(self.drift(t, np.atleast_2d(X)), dtype=float)

    def sigma(self, t, X):
        return np.asarray(self.diffusion(t, np.atleast_2d(X)), dtype=float)

    def a(self, t, X):
        s = self.sigma(t, X)
        return np.einsum("nik,njk->nij", s, s)

    # 1-D conveniences on a vector of nodes
    def b1(self, t, x):
        self._need1d()
        return self.b(t, np.asarray(x, dtype=float).reshape(-1, 1))[:, 0]

    def sigma1(self, t, x):
        """(n, m) diffusion row for a 1-D model."""
        self._need1d()
        return self.sigma(t, np.asarray(x, dtype=float).reshape(-1, 1))[:, 0, :]

    def a1(self, t, x):
        s = self.sigma1(t, x)
        return np.sum(s * s, axis=1)

    def _need1d(self):
        if self.dim != 1:
            raise ValueError(f"{self.tag} is {self.dim}-D; a 1-D model is needed here")


def _jacobian_fd(model, t, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, d = X.shape
    J = np.empty((N, d, model.noise_dim, d))
    for j in range(d):
        h = 1e-5 * np.maximum(1.0, np.abs(X[:, j]))
        Xp, Xm = X.copy(), X.copy()
        Xp[:, j] += h
        Xm[:, j] -= h
        J[..., j] = (model.sigma(t, Xp) - model.sigma(t, Xm)) / (2 * h)[:, None, None]
    return J


def stratonovich_correction(model, t, X):
    """c_i = 1/2 sum_{j,k} sigma_jk d_j sigma_ik."""
    if model.additive:
        return np.zeros((np.atleast_2d(X).shape[0], model.dim))
    s = model.sigma(t, X)
    J = model.diffusion_jacobian(t, X) if model.diffusion_jacobian else _jacobian_fd(model, t, X)
    return 0.5 * np.einsum("njk,nikj->ni", s, J)


def strat_to_ito(model: SdeModel) -> SdeModel:
    """Equivalent Ito model with drift b + c."""
    if model.calculus == "ito":
        return model
    if model.additive:
        return replace(model, calculus="ito")

    def drift(t, X):
        return model.b(t, X) + stratonovich_correction(model, t, X)

    return replace(model, drift=drift, calculus="ito", name=model.name + "[ito]")


# presets ---------------------------------------------------------------

def _const_sigma(S):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    return lambda t, X: np.broadcast_to(S, (X.shape[0],) + S.shape)


def ou(beta=1.0, sigma=np.sqrt(2.0), mean=0.0):
    """dX = -beta (X - mean) dt + sigma dW."""
    return SdeModel(1, 1, lambda t, X: -beta * (X - mean), _const_sigma([[sigma]]),
                    name="ou", params={"beta": beta, "sigma": sigma, "mean": mean}, additive=True)


def double_well(a=1.0, b=1.0, sigma=1.0):
    """dX = (a X - b X^3) dt + sigma dW."""
    return SdeModel(1, 1, lambda t, X: a * X - b * X**3, _const_sigma([[sigma]]),
                    name="double-well", params={"a": a, "b": b, "sigma": sigma}, additive=True)


def polynomial(drift_coeffs, diffusion_coeffs, calculus="ito"):
    """1-D model with b(x) = sum c_k x^k and sigma(x) = sum s_k x^k."""
    bc = np.asarray(drift_coeffs, dtype=float)
    sc = np.asarray(diffusion_coeffs, dtype=float)
    dsc = np.polynomial.polynomial.polyder(sc) if sc.size > 1 else np.zeros(1)
    pv = np.polynomial.polynomial.polyval

    def jac(t, X):
        return pv(X, dsc)[:, :, None, None]

    return SdeModel(1, 1, lambda t, X: pv(X, bc), lambda t, X: pv(X, sc)[:, :, None],
                    calculus=calculus, diffusion_jacobian=jac, name="custom-polynomial",
                    params={"drift": bc.tolist(), "diffusion": sc.tolist()},
                    additive=bool(sc.size <= 1 or not np.any(sc[1:])))


def linear(A, S):
    """dX = A X dt + S dW with constant matrices."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    return SdeModel(A.shape[0], S.shape[1], lambda t, X: X @ A.T, _const_sigma(S),
                    name="linear", params={"A": A.tolist(), "S": S.tolist()}, additive=True)


# randomness and integration --------------------------------------------

@dataclass(frozen=True)
class RngSpec:
    """Counter-based per-trajectory substreams (Philox keyed by SeedSequence)."""

    master_seed: int
    stream: int = 0

    def generator(self, index):
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream), int(index)))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, stream):
        return RngSpec(self.master_seed, stream)


@dataclass(frozen=True)
class Ensemble:
    times: np.ndarray
    states: np.ndarray   # (K, N, d)
    seed: int
    model_tag: str
    dt: float = float("nan")

    @property
    def n_traj(self):
        return self.states.shape[1]

    def at(self, t):
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.states[k]

    def to_csv(self, path):
        d = self.states.shape[2]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "traj"] + [f"x{j + 1}" for j in range(d)])
            for t, X in zip(self.times, self.states):
                for i, row in enumerate(X):
                    w.writerow([repr(float(t)), i] + [repr(float(v)) for v in row])


def default_workers():
    v = os.environ.get("LUQ_WORKERS")
    try:
        return max(1, int(v)) if v else 1
    except ValueError:
        return 1


def _steps(t0, t1, dt):
    if dt <= 0 or t1 < t0:
        raise ValueError("need dt > 0 and t1 >= t0")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    return n, ((t1 - t0) / n if n else 0.0)


def _draw_chunk(model, init, rng, idx, n_steps):
    m, d = model.noise_dim, model.dim
    X0 = np.empty((idx.size, d))
    Z = np.empty((idx.size, n_steps, m))
    for r, i in enumerate(idx):
        g = rng.generator(i)
        X0[r] = init(g) if callable(init) else init[i]
        Z[r] = g.standard_normal((n_steps, m))
    return X0, Z


def _run_chunk(model, init, rng, idx, t0, n_steps, dt, rec_steps):
    X, Z = _draw_chunk(model, init, rng, idx, n_steps)
    out = np.empty((len(rec_steps), idx.size, model.dim))
    want = {}
    for r, k in enumerate(rec_steps):
        want.setdefault(k, []).append(r)
    for r in want.get(0, []):
        out[r] = X
    sq = math.sqrt(dt)
    for k in range(n_steps):
        t = t0 + k * dt
        dW = Z[:, k, :] * sq
        with np.errstate(over="ignore", invalid="ignore"):
            X = X + model.b(t, X) * dt + np.sum(model.sigma(t, X) * dW[:, None, :], axis=2)
        if not np.all(np.isfinite(X)):
            bad = int(idx[np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0]])
            raise SimulationError(f"non-finite state in trajectory {bad} at t={t + dt:.6g}")
        for r in want.get(k + 1, []):
            out[r] = X
    return out


def integrate_em(model: SdeModel, init, t0, t1, dt, rng: RngSpec, record_times=None,
                 n_traj=None, workers=None, chunk=None):
    """Euler-Maruyama ensemble.

    Parameters
    ----------
    init : array (N, d) or (d,), or callable
        Initial states, or a sampler ``init(generator) -> (d,)`` called once
        per trajectory on its own substream.  With a sampler or a single
        state, `n_traj` sets N.
    record_times : sequence, optional
        Times in [t0, t1]; each is recorded at the nearest step.  Default
        is (t0, t1).
    """
    if model.calculus != "ito":
        model = strat_to_ito(model)
    if callable(init):
        if n_traj is None:
            raise ValueError("n_traj is required with a sampler initial condition")
        N = int(n_traj)
    else:
        init = np.asarray(init, dtype=float)
        if init.ndim == 1:
            if init.size != model.dim:
                raise ValueError("initial state has the wrong dimension")
            N = int(n_traj or 1)
            init = np.broadcast_to(init, (N, model.dim))
        else:
            N = init.shape[0]
        if init.shape[1] != model.dim:
            raise ValueError("initial states have the wrong dimension")
    n_steps, dte = _steps(t0, t1, dt)
    rt = np.asarray([t0, t1] if record_times is None else record_times, dtype=float)
    if np.any(rt < t0 - 1e-12) or np.any(rt > t1 + 1e-12):
        raise ValueError("record times must lie in [t0, t1]")
    rec_steps = [int(round((t - t0) / dte)) if n_steps else 0 for t in rt]
    if chunk is None:
        per = max(1, (n_steps + 1) * max(model.noise_dim, model.dim) * 8)
        chunk = int(max(1, min(N, CHUNK_BYTES // per)))
    bounds = [np.arange(s, min(s + chunk, N)) for s in range(0, N, chunk)]
    workers = workers or default_workers()
    job = lambda idx: _run_chunk(model, init, rng, idx, t0, n_steps, dte, rec_steps)
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    states = np.concatenate(parts, axis=1) if parts else np.empty((len(rt), 0, model.dim))
    times = np.array([t0 + k * dte for k in rec_steps])
    return Ensemble(times, states, int(rng.master_seed), model.tag, dte)


# generator -------------------------------------------------------------

def _d1(f, h, axis):
    return np.gradient(f, h, axis=axis, edge_order=2)


def _d2(f, h, axis):
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def generator_apply(model: SdeModel, grid, f, t=0.0):
    """(L_t f)(x) = b . grad f + 1/2 a : hess f on the grid nodes.

    Second-order central differences inside, one-sided second-order stencils on
    the boundary.  `f` is an array of node values or a callable.
    """
    if model.calculus != "ito":
        raise ValueError("generator_apply expects an Ito model; call strat_to_ito first")
    if grid.dims != model.dim:
        raise ValueError("grid and model dimensions differ")
    if any(k < 5 for k in grid.n):
        raise ValueError("grid too coarse: need at least 5 nodes per axis")
    fv = grid.evaluate(f) if callable(f) else np.asarray(f, dtype=float)
    pts = grid.points()
    b = model.b(t, pts).reshape(grid.shape + (model.dim,))
    a = model.a(t, pts).reshape(grid.shape + (model.dim, model.dim))
    h = grid.spacing
    out = np.zeros(grid.shape)
    grads = [_d1(fv, h[i], i) for i in range(grid.dims)]
    for i in range(grid.dims):
        out += b[..., i] * grads[i]
        out += 0.5 * a[..., i, i] * _d2(fv, h[i], i)
        for j in range(i + 1, grid.dims):
            out += a[..., i, j] * _d1(grads[i], h[j], j)
    return out
