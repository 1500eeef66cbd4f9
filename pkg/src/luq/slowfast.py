"""The slow-fast toy system and its two reduced models.

    dX = (-beta X + Y^2) dt + sigma_x dB
    dY = -(gamma / eps) Y dt + (sigma_y / sqrt(eps)) dW

Averaging replaces Y^2 by its mean under the fast invariant law
N(0, sigma_y^2 / (2 gamma)) (model I); the fluctuation correction adds an
independent noise of strength sqrt(eps) sigma_y^2 / sqrt(2 gamma^3) (model F).
Both reductions are linear, so their densities are Gaussian in closed form.

The experiment simulates the full system, estimates the slow marginal by KDE
and compares it with both reductions, alongside the KL bounds built from the
C-coefficient fields of the joint density.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .divergence import catalog, divergence
from .grid import Grid, GridDensity, gaussian_density, trapezoid_weights
from .kolmogorov import conditional, kde_estimate, silverman_bandwidth
from .reconstruction import tensor_pseudo_inverse
from .sde import RngSpec, SdeModel, integrate_em


@dataclass(frozen=True)
class SlowFastParams:
    beta: float = 1.0
    gamma: float = 1.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    eps: float = 0.05

    def __post_init__(self):
        for k in ("beta", "gamma", "sigma_x", "sigma_y"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")

    @property
    def small_eps(self):
        return self.eps * self.sigma_y**4 / (2 * self.sigma_x**2 * self.gamma**3) <= 1

    @property
    def pi_var(self):
        """Variance of the fast invariant law."""
        return self.sigma_y**2 / (2 * self.gamma)

    @property
    def s_F(self):
        """Extra diffusion coefficient of the fluctuation model."""
        return math.sqrt(self.eps) * self.sigma_y**2 / math.sqrt(2 * self.gamma**3)

    @property
    def a_I(self):
        return self.sigma_x**2

    @property
    def a_F(self):
        return self.sigma_x**2 + self.s_F**2

    @property
    def drift_shift(self):
        return self.sigma_y**2 / (2 * self.gamma)


def full_model(p: SlowFastParams) -> SdeModel:
    def drift(t, X):
        return np.stack([-p.beta * X[:, 0] + X[:, 1] ** 2, -(p.gamma / p.eps) * X[:, 1]], axis=1)

    S = np.diag([p.sigma_x, p.sigma_y / math.sqrt(p.eps)])
    return SdeModel(2, 2, drift, lambda t, X: np.broadcast_to(S, (X.shape[0], 2, 2)),
                    name="slowfast", params=asdict(p), additive=True)


def averaged_model(p: SlowFastParams) -> SdeModel:
    S = np.array([[p.sigma_x]])
    return SdeModel(1, 1, lambda t, X: -p.beta * X + p.drift_shift,
                    lambda t, X: np.broadcast_to(S, (X.shape[0], 1, 1)),
                    name="slowfast-averaged", params=asdict(p), additive=True)


def fluctuation_model(p: SlowFastParams) -> SdeModel:
    S = np.array([[p.sigma_x, p.s_F]])
    return SdeModel(1, 2, lambda t, X: -p.beta * X + p.drift_shift,
                    lambda t, X: np.broadcast_to(S, (X.shape[0], 1, 2)),
                    name="slowfast-fluctuation", params=asdict(p), additive=True)


def fast_invariant_density(p: SlowFastParams, y_grid: Grid, x=None) -> GridDensity:
    """N(0, sigma_y^2 / (2 gamma)) on the y grid; the same for every x."""
    return gaussian_density(y_grid, 0.0, p.pi_var)


def reduced_moments(p: SlowFastParams, which, t, m0=0.0, v0=0.25):
    """Mean and variance of model I or F at time t from N(m0, v0)."""
    a = p.a_I if which.upper() == "I" else p.a_F
    e1, e2 = math.exp(-p.beta * t), math.exp(-2 * p.beta * t)
    return m0 * e1 + p.drift_shift / p.beta * (1 - e1), v0 * e2 + a * (1 - e2) / (2 * p.beta)


# C-coefficients and Theta fields -----------------------------------------

def _ddt(times, values, k):
    """d/dt at snapshot k: centred differences inside, one-sided at the ends."""
    if len(values) < 2:
        raise ValueError("at least two snapshots are needed for the time derivative")
    n = len(values)
    i, j = (k - 1, k + 1) if 0 < k < n - 1 else ((0, 1) if k == 0 else (n - 2, n - 1))
    return (values[j] - values[i]) / (times[j] - times[i])


@dataclass
class CCoefficients:
    x: np.ndarray
    t: float
    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    rho: np.ndarray
    defined: np.ndarray
    C3_literal: np.ndarray | None = None


def c_coefficients(joints, p: SlowFastParams, k, smooth_pi=None, literal_c3=False):
    """C1, C2, C3 at snapshot k of a joint-density series [(t, GridDensity)].

    C1 = int (rho(y|x) - Pi) dy, C2 = int y^2 (rho(y|x) - Pi) dy.  C3 is the
    antiderivative from the left end of the x grid of int L_y* rho dy,
    evaluated through the marginal balance

        eps^-1 int L_y* rho dy = d_t rho - L_x* rho + d_x int y^2 rho dy,

    L_x* rho = d_x(beta x rho) + sigma_x^2/2 d_xx rho, so no y-derivative of
    the estimated joint is needed.  `smooth_pi` (a y-bandwidth) widens Pi by
    the kernel variance so that KDE-smoothed conditionals are compared with
    an equally smoothed reference.
    """
    t, joint = joints[k]
    g = joint.grid
    x, y = g.axes
    hx = g.spacing[0]
    cond = conditional(joint, axis=1)
    var = p.pi_var + (0.0 if smooth_pi is None else float(smooth_pi) ** 2)
    pi = np.exp(-0.5 * y**2 / var)
    wy = trapezoid_weights(y.size, g.spacing[1])
    pi /= np.sum(wy * pi)
    C1 = cond.column_mass() - np.sum(wy * pi)
    C2 = cond.expect(y**2) - np.sum(wy * pi * y**2)
    C1 = np.where(cond.defined, C1, 0.0)
    C2 = np.where(cond.defined, C2, 0.0)
    rho = np.asarray(cond.marginal.values) * joint.mass()
    drho = _ddt([s for s, _ in joints], [np.asarray(j.values) @ wy for _, j in joints], k)
    m2 = (np.asarray(joint.values) * y**2) @ wy
    flux = p.beta * x * rho + 0.5 * p.sigma_x**2 * np.gradient(rho, hx, edge_order=2) - m2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (drho[1:] + drho[:-1]) * hx)])
    # eps^-1 C3 = int_c^x d_t rho - flux(x) + flux(c)
    C3 = p.eps * (cum - flux + flux[0])
    lit = None
    if literal_c3:
        v = np.asarray(joint.values)
        dy = np.gradient(v, g.spacing[1], axis=1, edge_order=2)
        bflux = p.gamma * y * v + 0.5 * p.sigma_y**2 * dy
        inner = bflux[:, -1] - bflux[:, 0]
        lit = np.concatenate([[0.0], np.cumsum(0.5 * (inner[1:] + inner[:-1]) * hx)])
    return CCoefficients(x, t, C1, C2, C3, rho, cond.defined, lit)


def theta_fields(cc: CCoefficients, p: SlowFastParams, rho_floor=1e-3):
    """(Theta_I, Theta_F, mask) at one snapshot.

    Theta_I = K - sigma_x^2/2 rho^-1 d_x(C1 rho) - eps^-1 rho^-1 C3 with
    K = -beta x C1 + C2, and Theta_F = Theta_I + eps sigma_y^4/(4 gamma^3) d_x log rho.
    Nodes with rho below rho_floor * max(rho) are masked out.
    """
    x, rho = cc.x, cc.rho
    h = x[1] - x[0]
    ok = cc.defined & (rho >= rho_floor * rho.max())
    r = np.where(ok, rho, 1.0)
    K = -p.beta * x * cc.C1 + cc.C2
    th_I = K - 0.5 * p.sigma_x**2 * np.gradient(cc.C1 * rho, h, edge_order=2) / r - cc.C3 / (p.eps * r)
    dlog = np.gradient(np.log(np.where(rho > 0, rho, rho[rho > 0].min())), h, edge_order=2)
    th_F = th_I + p.eps * p.sigma_y**4 / (4 * p.gamma**3) * dlog
    return np.where(ok, th_I, 0.0), np.where(ok, th_F, 0.0), ok


def _bound(theta_series, rho_series, times, x, inv_a):
    w = trapezoid_weights(x.size, x[1] - x[0])
    I = np.array([0.5 * np.sum(w * th**2 * inv_a * r) for th, r in zip(theta_series, rho_series)])
    return float(np.sum(0.5 * (I[1:] + I[:-1]) * np.diff(times))), I


def kl_bound_averaged(p: SlowFastParams, rho_series, theta_series, times, x):
    """1/2 int int |sigma_x^-1 Theta|^2 rho dx ds."""
    return _bound(theta_series, rho_series, np.asarray(times), np.asarray(x), 1.0 / p.sigma_x**2)[0]


def fluct_factor(p: SlowFastParams):
    """|(sigma_x, s_F)^+ v|^2 / v^2 from the pseudo-inverse of the 1x2 row."""
    row = np.array([[p.sigma_x, p.s_F]])
    return float(np.sum(tensor_pseudo_inverse(row) ** 2))


def kl_bound_fluct(p: SlowFastParams, rho_series, theta_series, times, x):
    """1/2 int int |(sigma_x, s_F)^+ Theta|^2 rho dx ds."""
    return _bound(theta_series, rho_series, np.asarray(times), np.asarray(x), fluct_factor(p))[0]


def expansion_check(p: SlowFastParams, rho_series, theta_series, times, x, eps_values=(0.02, 0.04, 0.08)):
    """Fit log-log slopes in eps of the gaps between the exact F bound and its
    expansions in eps, on a fixed (Theta, rho) input.

    order0: exact vs sigma_x^-2 (expected slope 1);
    order1: exact vs sigma_x^-2 - eps sigma_x^-4 sigma_y^4 / (2 gamma^3) (slope 2);
    order1_printed: the same with sigma_y^2 in place of sigma_y^4.
    """
    out = {"eps": list(eps_values), "order0": [], "order1": [], "order1_printed": []}
    for e in eps_values:
        q = SlowFastParams(p.beta, p.gamma, p.sigma_x, p.sigma_y, e)
        exact = kl_bound_fluct(q, rho_series, theta_series, times, x)
        base = kl_bound_averaged(q, rho_series, theta_series, times, x)
        c4 = e * p.sigma_y**4 / (2 * p.sigma_x**2 * p.gamma**3)
        c2 = e * p.sigma_y**2 / (2 * p.sigma_x**2 * p.gamma**3)
        out["order0"].append(abs(exact - base))
        out["order1"].append(abs(exact - base * (1 - c4)))
        out["order1_printed"].append(abs(exact - base * (1 - c2)))
    le = np.log(eps_values)
    for k in ("order0", "order1", "order1_printed"):
        v = np.asarray(out[k])
        out[k + "_slope"] = float(np.polyfit(le, np.log(v), 1)[0]) if np.all(v > 0) else float("nan")
    return out


# the experiment ---------------------------------------------------------

@dataclass
class CaseStudyReport:
    params: dict
    seed: int
    n: int
    dt: float
    t_final: float
    kl_I: float
    kl_F: float
    ci_I: list
    ci_F: list
    ci_diff: list
    verdict: str
    kl_I_raw: float
    kl_F_raw: float
    bound_I: float | None = None
    bound_F: float | None = None
    bound_change: float | None = None
    bound_converged: bool | None = None
    bound_dominance: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)

    @property
    def ordering_holds(self):
        return self.verdict != "I_better"

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def default_grids(p: SlowFastParams):
    sx = math.sqrt(max(p.a_F / (2 * p.beta), 0.25))
    c = p.drift_shift / p.beta
    xg = Grid.line(c - 8 * sx, c + 8 * sx, 321)
    sy = math.sqrt(p.pi_var)
    yg = Grid.line(-7 * sy, 7 * sy, 141)
    return xg, yg


def _kl_pair(kde, xg, p, t, h, m0, v0, smooth):
    out = []
    for which in ("I", "F"):
        m, v = reduced_moments(p, which, t, m0, v0)
        out.append(divergence(catalog("kl"), kde, gaussian_density(xg, m, v + (h * h if smooth else 0.0))))
    return out


def compare_reductions(p: SlowFastParams, t_final=0.5, N=100_000, grids=None, rng: RngSpec | None = None,
                       n_snap=21, n_boot=100, dt=None, x0_var=0.25, with_bounds=True, workers=None,
                       rho_floor=1e-3):
    """Simulate the full system and score both reductions against it.

    The slow marginal is estimated by a binned Gaussian KDE and compared in KL
    with the reduced Gaussians convolved with the same kernel (the raw,
    unsmoothed comparison is reported too).  Bootstrap CIs resample
    trajectories through multinomial KDE weights; the verdict uses the
    paired difference KL_F - KL_I: "F_better" if its CI lies below 0,
    "I_better" if above, "indistinguishable" otherwise.
    """
    if N < 1000:
        raise ValueError("N must be at least 1000")
    rng = rng or RngSpec(0)
    dt = p.eps / 50 if dt is None else dt
    if dt > p.eps / 50 * (1 + 1e-12):
        raise ValueError("the fast time step must satisfy dt <= eps/50")
    xg, yg = grids or default_grids(p)
    sx0, sy0 = math.sqrt(x0_var), math.sqrt(p.pi_var)

    def init(g):
        return np.array([g.normal(0.0, sx0), g.normal(0.0, sy0)])

    times = np.linspace(0.0, t_final, n_snap)
    ens = integrate_em(full_model(p), init, 0.0, t_final, dt, rng, record_times=times, n_traj=N,
                       workers=workers)
    Xt = ens.states[-1][:, :1]
    kde, info = kde_estimate(Xt, xg, return_info=True)
    h = info["bandwidth"][0]
    kl_I, kl_F = _kl_pair(kde, xg, p, t_final, h, 0.0, x0_var, True)
    kl_I_raw, kl_F_raw = _kl_pair(kde, xg, p, t_final, h, 0.0, x0_var, False)
    bg = rng.substream(7).generator(0)
    bs = []
    for _ in range(n_boot):
        w = bg.multinomial(N, np.full(N, 1.0 / N)).astype(float)
        kb = kde_estimate(Xt, xg, bandwidth=h, weights=w)
        bs.append(_kl_pair(kb, xg, p, t_final, h, 0.0, x0_var, True))
    bs = np.array(bs)
    q = lambda v: [float(np.percentile(v, 2.5)), float(np.percentile(v, 97.5))]
    ci_diff = q(bs[:, 1] - bs[:, 0])
    verdict = "F_better" if ci_diff[1] < 0 else ("I_better" if ci_diff[0] > 0 else "indistinguishable")
    rep = CaseStudyReport(asdict(p), int(rng.master_seed), int(N), float(ens.dt), float(t_final),
                          float(kl_I), float(kl_F), q(bs[:, 0]), q(bs[:, 1]), ci_diff, verdict,
                          float(kl_I_raw), float(kl_F_raw),
                          resolution={"x_grid": [xg.lo[0], xg.hi[0], xg.n[0]], "y_grid": [yg.lo[0], yg.hi[0], yg.n[0]],
                                      "bandwidth_x": h, "fraction_inside": info["fraction_inside"],
                                      "snapshots": int(n_snap), "n_boot": int(n_boot), "small_eps": p.small_eps})
    if with_bounds:
        b = case_bounds(p, ens, xg, yg, rho_floor=rho_floor)
        rep.bound_I, rep.bound_F = b["bound_I"], b["bound_F"]
        rep.bound_change, rep.bound_converged = b["change"], b["converged"]
        rep.resolution.update({"joint_bandwidth": b["bandwidth"], "rho_floor": rho_floor})
        rep.bound_dominance = {
            "I": bool(kl_I_raw <= b["bound_I"]), "F": bool(kl_F_raw <= b["bound_F"]),
            "applicable": bool(b["converged"]),
        }
    return rep


def case_bounds(p: SlowFastParams, ens, xg: Grid, yg: Grid, rho_floor=1e-3):
    """KL bounds for both reductions from joint KDEs of every snapshot."""
    grid2 = Grid((xg.lo[0], yg.lo[0]), (xg.hi[0], yg.hi[0]), (xg.n[0], yg.n[0]))
    h = None
    joints = []
    for t, X in zip(ens.times, ens.states):
        if h is None:
            h = silverman_bandwidth(X)
        joints.append((float(t), kde_estimate(X, grid2, bandwidth=h, time=float(t))))
    thI, thF, rhos = [], [], []
    for k in range(len(joints)):
        cc = c_coefficients(joints, p, k, smooth_pi=h[1])
        a, b, ok = theta_fields(cc, p, rho_floor)
        thI.append(a)
        thF.append(b)
        rhos.append(cc.rho)
    times = np.asarray(ens.times)
    x = xg.x
    bI, II = _bound(thI, rhos, times, x, 1.0 / p.sigma_x**2)
    bF, IF = _bound(thF, rhos, times, x, fluct_factor(p))
    change = None
    if (len(times) - 1) % 2 == 0 and len(times) >= 5:
        cI = float(np.sum(0.5 * (II[2::2] + II[:-2:2]) * np.diff(times[::2])))
        cF = float(np.sum(0.5 * (IF[2::2] + IF[:-2:2]) * np.diff(times[::2])))
        change = max(abs(cI - bI) / max(bI, 1e-300), abs(cF - bF) / max(bF, 1e-300))
    return {"bound_I": bI, "bound_F": bF, "integrand_I": II.tolist(), "integrand_F": IF.tolist(),
            "change": change, "converged": bool(change is not None and change < 0.05),
            "bandwidth": np.asarray(h).tolist(), "theta_I": thI, "theta_F": thF, "rho": rhos,
            "times": times.tolist()}
