"""Uniform grids and the density containers built on them.

`GridDensity` stores nodal values of a probability density on a uniform 1-D or
2-D grid; `DiscreteDistribution` is the finite-support counterpart used by
brute-force oracles.  Both expose `masses()`, the vector of probabilities
carried by each node, which is what every divergence and bound in the package
is computed from.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatchError

MASS_TOL = 1e-6


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class Grid:
    """Tensor-product uniform grid with `n[k]` nodes on `[lo[k], hi[k]]`."""

    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not (len(lo) == len(hi) == len(n)) or len(n) not in (1, 2):
            raise ValueError("grid must be 1-D or 2-D with matching lo/hi/n")
        if any(k < 2 for k in n) or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("need hi > lo and at least two nodes per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @classmethod
    def line(cls, lo, hi, n):
        return cls((lo,), (hi,), (n,))

    @property
    def dims(self):
        return len(self.n)

    @property
    def shape(self):
        return self.n

    @property
    def spacing(self):
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.n))

    @property
    def axes(self):
        return tuple(np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.n))

    @property
    def x(self):
        """Nodes of the first axis (the only axis for 1-D grids)."""
        return self.axes[0]

    @property
    def span(self):
        return float(np.prod([b - a for a, b in zip(self.lo, self.hi)]))

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self):
        """Nodes as an (n_nodes, dims) array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def weights(self):
        """Trapezoidal quadrature weights with the grid's shape."""
        ws = [trapezoid_weights(k, h) for k, h in zip(self.n, self.spacing)]
        if self.dims == 1:
            return ws[0]
        return np.outer(ws[0], ws[1])

    def integrate(self, values):
        return float(np.sum(self.weights() * values))

    def evaluate(self, f):
        """Evaluate a callable on the nodes, `f(x)` in 1-D and `f(x, y)` in 2-D."""
        return np.broadcast_to(np.asarray(f(*self.mesh()), dtype=float), self.shape).copy()

    def check_same(self, other):
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


@dataclass(frozen=True)
class GridDensity:
    grid: Grid
    values: np.ndarray
    time: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_values(cls, grid, values, time=None, normalize=True):
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        if normalize:
            m = grid.integrate(v)
            if not m > 0:
                raise ValueError("cannot normalize a density with zero mass")
            v = v / m
        return cls(grid, v, time)

    @classmethod
    def from_function(cls, grid, f, time=None, normalize=True):
        return cls.from_values(grid, grid.evaluate(f), time, normalize)

    def mass(self):
        return self.grid.integrate(self.values)

    def masses(self):
        """Probability carried by each node under the trapezoidal rule."""
        return self.grid.weights() * self.values

    def normalized(self):
        return GridDensity.from_values(self.grid, self.values, self.time)

    def with_time(self, time):
        return GridDensity(self.grid, self.values, time)

    def expect(self, g):
        g = node_values(self, g)
        return float(np.sum(self.masses() * g))

    def mean(self, axis=0):
        return self.expect(self.grid.mesh()[axis])

    def var(self, axis=0):
        x = self.grid.mesh()[axis]
        m = self.expect(x)
        return self.expect((x - m) ** 2)

    def to_csv(self, path):
        write_density_csv(self, path)


@dataclass(frozen=True)
class DiscreteDistribution:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_counts(cls, counts):
        c = np.asarray(counts, dtype=float)
        return cls(c / c.sum())

    def __len__(self):
        return self.weights.size

    def masses(self):
        return np.asarray(self.weights)

    def expect(self, g):
        return float(np.sum(self.weights * node_values(self, g)))


def masses_of(d):
    return np.asarray(d.masses(), dtype=float)


def node_values(d, g):
    """Values of an observable at the nodes of `d`: accepts arrays or callables."""
    if callable(g):
        if isinstance(d, GridDensity):
            return d.grid.evaluate(g)
        return np.asarray(g(np.arange(len(d))), dtype=float)
    g = np.asarray(g, dtype=float)
    target = d.grid.shape if isinstance(d, GridDensity) else (len(d),)
    return np.broadcast_to(g, target)


def check_compatible(mu, nu):
    if isinstance(mu, GridDensity) and isinstance(nu, GridDensity):
        mu.grid.check_same(nu.grid)
    elif isinstance(mu, DiscreteDistribution) and isinstance(nu, DiscreteDistribution):
        if len(mu) != len(nu):
            raise GridMismatchError(f"support sizes differ: {len(mu)} vs {len(nu)}")
    else:
        raise GridMismatchError("cannot compare a grid density with a discrete distribution")


def gaussian_density(grid, mean, var, time=None):
    """Normal density on a 1-D grid, or a product/correlated normal on a 2-D grid.

    For 2-D grids `mean` is a pair and `var` a 2x2 covariance matrix.
    """
    if grid.dims == 1:
        x = grid.x
        v = np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)
        return GridDensity.from_values(grid, v, time)
    cov = np.asarray(var, dtype=float)
    prec = np.linalg.inv(cov)
    X, Y = grid.mesh()
    dx, dy = X - mean[0], Y - mean[1]
    q = prec[0, 0] * dx**2 + 2 * prec[0, 1] * dx * dy + prec[1, 1] * dy**2
    return GridDensity.from_values(grid, np.exp(-0.5 * q), time)


def write_density_csv(d: GridDensity, path):
    """Write `x[,y],rho` rows in row-major node order."""
    names = ["x", "y"][: d.grid.dims] + ["rho"]
    pts = d.grid.points()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, r in zip(pts, d.values.ravel()):
            w.writerow([repr(float(c)) for c in p] + [repr(float(r))])


def read_density_csv(path, time=None, normalize=True) -> GridDensity:
    """Inverse of `write_density_csv`; the grid is recovered from the node coordinates."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header[-1] != "rho" or header[0] != "x":
        raise ValueError(f"unexpected density CSV header {header}")
    coords = body[:, :-1]
    axes = [np.unique(coords[:, k]) for k in range(coords.shape[1])]
    grid = Grid(tuple(a[0] for a in axes), tuple(a[-1] for a in axes), tuple(a.size for a in axes))
    vals = body[:, -1].reshape(grid.shape)
    return GridDensity.from_values(grid, vals, time, normalize=normalize)
