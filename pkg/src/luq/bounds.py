"""Observable-error bounds built on a phi-divergence.

For an observable g the gap E_mu[g] - E_nu[g] is bracketed by

    B_-  = -inf_{lam>0} (G(-lam) + D) / lam
    B_+  =  inf_{lam>0} (G(lam) + D) / lam

with G(lam) = E_nu[phi*(lam (g - E_nu g))] and D = D_phi(mu || nu).  The same
numbers come out of the representation B_+ = G'(H^{-1}(D)) where
H(lam) = lam G'(lam) - G(lam).  Also here: the small-D linearization, the
Chapman-Robbins bound and the total-variation bound.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .divergence import PhiFunction, catalog, divergence_any
from .errors import CapabilityError, InfiniteDivergenceError
from .grid import GridDensity, check_compatible, masses_of, node_values

LAM_LO, LAM_HI = 1e-8, 1e8
GOLD = 0.5 * (np.sqrt(5.0) - 1.0)
VAR_TOL = 1e-14


@dataclass(frozen=True)
class Observable:
    """A function on the nodes, given as values or as a callable."""

    g: object
    name: str = "g"

    def on(self, d):
        v = np.asarray(node_values(d, self.g), dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"observable {self.name} is not finite on the grid")
        return v


def _values(d, g):
    if isinstance(g, Observable):
        return g.on(d)
    v = np.asarray(node_values(d, g), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("observable is not finite on the grid")
    return v


def mean_var(d, g):
    p = masses_of(d)
    gv = _values(d, g)
    m = float(np.sum(p * gv))
    return m, float(np.sum(p * (gv - m) ** 2))


def gap(mu, nu, g):
    check_compatible(mu, nu)
    return float(np.sum(masses_of(mu) * _values(mu, g)) - np.sum(masses_of(nu) * _values(nu, g)))


class _Cumulant:
    """lam -> G(lam) with the centred observable cached."""

    def __init__(self, phi: PhiFunction, nu, g):
        phi.require_smooth_conj("cumulant G")
        self.phi = phi
        p = masses_of(nu).ravel()
        gv = _values(nu, g).ravel()
        keep = p > 0
        self.p = p[keep]
        self.gc = gv[keep] - np.sum(p * gv)
        self.var = float(np.sum(self.p * self.gc**2))

    def __call__(self, lam):
        if lam == 0:
            return 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            c = self.phi.conj(lam * self.gc)
        if not np.all(np.isfinite(c)):
            return np.inf
        return float(np.sum(self.p * c))

    def grad(self, lam):
        h = max(1e-6, 1e-6 * abs(lam))
        gp, gm = self(lam + h), self(lam - h)
        if not (np.isfinite(gp) and np.isfinite(gm)):
            return np.inf
        return (gp - gm) / (2 * h)


def cumulant_G(phi: PhiFunction, nu, g, lam):
    """G(lam) = E_nu[phi*(lam (g - E_nu g))]; +inf outside the domain of phi*."""
    return _Cumulant(phi, nu, g)(float(lam))


def _golden_log(f, x0, xlo, xhi, tol=1e-10, maxit=500):
    """Minimize a unimodal f over x in [xlo, xhi] (x = log lam).

    Brackets by geometric expansion from x0, then golden-section search.
    """
    it = 0
    x0 = min(max(x0, xlo), xhi)
    f0 = f(x0)
    # walk left out of an infeasible (inf) region first
    while not np.isfinite(f0) and x0 > xlo:
        x0 = max(x0 - 1.0, xlo)
        f0 = f(x0)
        it += 1
    step = 0.5
    x1 = min(x0 + step, xhi)
    f1 = f(x1)
    it += 1
    if f1 < f0:
        a, b, fb = x0, x1, f1
        while True:
            step *= 2
            c = min(b + step, xhi)
            fc = f(c)
            it += 1
            if fc >= fb or c >= xhi:
                break
            a, b, fb = b, c, fc
    else:
        b, fb, c = x0, f0, x1
        while True:
            a = max(b - step, xlo)
            fa = f(a)
            it += 1
            if fa >= fb or a <= xlo:
                break
            c, b, fb = b, a, fa
            step *= 2
    bracket = (float(np.exp(a)), float(np.exp(c)))
    # golden section on [a, c]
    x1 = c - GOLD * (c - a)
    x2 = a + GOLD * (c - a)
    f1, f2 = f(x1), f(x2)
    while c - a > tol and it < maxit:
        it += 1
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - GOLD * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLD * (c - a)
            f2 = f(x2)
    cands = [(f1, x1), (f2, x2), (f(a), a), (f(c), c)]
    fm, xm = min(cands)
    return xm, fm, {"iterations": it, "bracket": bracket}


def _bound_side(G: _Cumulant, D, sign):
    if D <= 0 or G.var < VAR_TOL:
        return 0.0, 0.0, {"iterations": 0, "bracket": None}

    def obj(x):
        lam = np.exp(x)
        return (G(sign * lam) + D) / lam

    lam0 = np.sqrt(2 * D / max(G.var, 1e-300))
    xm, fm, diag = _golden_log(obj, np.log(lam0), np.log(LAM_LO), np.log(LAM_HI))
    return sign * float(fm), float(np.exp(xm)), diag


def _divergence_checked(phi, mu, nu):
    D = divergence_any(phi, mu, nu)
    if not np.isfinite(D):
        raise InfiniteDivergenceError(f"{phi.label} divergence is infinite; phi-bounds unavailable")
    return D


def bound_plus(phi: PhiFunction, mu, nu, g, D=None):
    """Upper bound on E_mu g - E_nu g; returns (value, lambda_star)."""
    check_compatible(mu, nu)
    G = _Cumulant(phi, nu, g)
    D = _divergence_checked(phi, mu, nu) if D is None else D
    v, lam, _ = _bound_side(G, D, +1)
    return v, lam


def bound_minus(phi: PhiFunction, mu, nu, g, D=None):
    """Lower bound on E_mu g - E_nu g; returns (value, lambda_star)."""
    check_compatible(mu, nu)
    G = _Cumulant(phi, nu, g)
    D = _divergence_checked(phi, mu, nu) if D is None else D
    v, lam, _ = _bound_side(G, D, -1)
    return v, lam


def pseudo_inverse_scalar(eta, y, bracket):
    """inf{x in [a, b] : eta(x) >= y} for nondecreasing eta, by bisection."""
    a, b = float(bracket[0]), float(bracket[1])
    ea, eb = eta(a), eta(b)
    if y < ea or y > eb:
        raise ValueError(f"y={y} outside [eta(a), eta(b)] = [{ea}, {eb}]")
    if ea >= y:
        return a
    tol = 1e-12 * (b - a)
    while b - a > tol:
        m = 0.5 * (a + b)
        if eta(m) >= y:
            b = m
        else:
            a = m
    return b


def representation_bound(phi: PhiFunction, nu, g, D, sign=+1):
    """B_+ = G'(H_+^{-1}(D)) or B_- = G'(-H_-^{-1}(D)).

    H_+(lam) = lam G'(lam) - G(lam) and H_-(lam) = -lam G'(-lam) - G(-lam),
    both increasing on lam > 0 with H(0) = 0.
    """
    sign = 1 if sign in (1, "+", "plus") else -1
    G = _Cumulant(phi, nu, g)
    if D <= 0 or G.var < VAR_TOL:
        return 0.0

    def H(lam):
        if lam == 0:
            return 0.0
        l = sign * lam
        val = l * G.grad(l) - G(l)
        return val if np.isfinite(val) else np.inf

    hi = np.sqrt(2 * D / G.var)
    while H(hi) < D:
        hi *= 2
        if hi > LAM_HI:
            raise ValueError("H does not reach D inside the search range")
    # keep the bracket inside the domain where H is finite
    lo = 0.0
    while not np.isfinite(H(hi)):
        mid = 0.5 * (lo + hi)
        if H(mid) >= D:
            hi = mid
        else:
            lo = mid
    lam = pseudo_inverse_scalar(H, D, (lo, hi))
    return float(G.grad(sign * lam))


def linearized_bound(phi: PhiFunction, nu, g, D):
    """Leading-order magnitude sqrt(2 phi*''(0) Var_nu g) sqrt(D)."""
    phi.require_smooth_conj("linearized bound")
    if not (np.isfinite(phi.d2conj0) and phi.d2conj0 > 0):
        raise CapabilityError(f"{phi.label} has phi*''(0) = {phi.d2conj0}; no square-root linearization")
    if D <= 0:
        return 0.0
    _, var = mean_var(nu, g)
    return float(np.sqrt(2 * phi.d2conj0 * var) * np.sqrt(D))


def chapman_robbins(mu, nu, g):
    """sqrt(Var_nu g) * sqrt(chi2(mu || nu))."""
    check_compatible(mu, nu)
    chi = divergence_any(catalog("chi2"), mu, nu)
    if not np.isfinite(chi):
        raise InfiniteDivergenceError("chi2 divergence is infinite")
    _, var = mean_var(nu, g)
    return float(np.sqrt(var * chi))


def l1_distance(mu, nu):
    check_compatible(mu, nu)
    return float(np.sum(np.abs(masses_of(mu) - masses_of(nu))))


def csiszar_tv_bound(mu, nu, g):
    """sup|g| * int |rho_mu - rho_nu|."""
    gv = _values(nu, g)
    return float(np.max(np.abs(gv)) * l1_distance(mu, nu))


@dataclass
class BoundReport:
    phi: str
    divergence: float
    gap: float
    b_plus: float | None
    b_minus: float | None
    b_linearized: float | None
    lambda_star_plus: float | None
    lambda_star_minus: float | None
    cr_bound: float | None = None
    tv_bound: float | None = None
    available: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not np.isfinite(v):
                d[k] = "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return d

    @property
    def sandwich_ok(self):
        if not self.available:
            return True
        return self.b_minus - 1e-6 <= self.gap <= self.b_plus + 1e-6


def information_bounds(phi: PhiFunction, mu, nu, g, classical=True):
    """Evaluate every bound for one (mu, nu, g) triple."""
    check_compatible(mu, nu)
    G = _Cumulant(phi, nu, g)
    D = divergence_any(phi, mu, nu)
    gp = gap(mu, nu, g)
    cr = tv = None
    if classical:
        tv = csiszar_tv_bound(mu, nu, g)
        try:
            cr = chapman_robbins(mu, nu, g)
        except InfiniteDivergenceError:
            cr = None
    if not np.isfinite(D):
        return BoundReport(phi.label, float(D), gp, None, None, None, None, None, cr, tv,
                           available=False, diagnostics={"reason": "infinite divergence"})
    bp, lp, dp = _bound_side(G, D, +1)
    bm, lm, dm = _bound_side(G, D, -1)
    try:
        lin = linearized_bound(phi, nu, g, D)
    except ValueError:
        lin = None
    return BoundReport(phi.label, float(D), gp, bp, bm, lin, lp, lm, cr, tv,
                       diagnostics={"plus": dp, "minus": dm, "var_nu_g": G.var})
