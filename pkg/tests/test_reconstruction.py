import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from luq import sde
from luq.divergence import catalog
from luq.errors import CapabilityError
from luq.grid import Grid, gaussian_density
from luq.kolmogorov import fpe_solve
from luq.reconstruction import (divergence_bound_reconstruction, log_gradient, regularized_pseudo_inverse,
                                tensor_pseudo_inverse, theta_field)

from oracles import OU_SUITE, gauss_kl, ou_moments, ou_series

KL = catalog("kl")


def test_pinv_examples():
    assert np.array_equal(tensor_pseudo_inverse(np.zeros((2, 3))), np.zeros((3, 2)))
    assert np.allclose(tensor_pseudo_inverse(np.eye(3)), np.eye(3), atol=1e-15)
    assert np.allclose(tensor_pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-15)


def random_matrices(n=100, seed=0):
    r = np.random.default_rng(seed)
    out = []
    for i in range(n):
        d, m = r.integers(1, 5), r.integers(1, 5)
        k = r.integers(0, min(d, m) + 1) if i % 3 == 0 else min(d, m)
        s = r.standard_normal((d, k)) @ r.standard_normal((k, m)) if k else np.zeros((d, m))
        out.append(s)
    return out


def close(lhs, rhs, tol=1e-10):
    # 1e-10 relative to the entry scale (absolute when entries are O(1))
    return np.max(np.abs(lhs - rhs), initial=0.0) <= tol * max(1.0, np.max(np.abs(lhs), initial=0.0))


def test_pseudo_inverse_identities():
    for s in random_matrices():
        sp = tensor_pseudo_inverse(s)
        stp = tensor_pseudo_inverse(s.T)
        a = s @ s.T
        ap = stp @ sp          # pseudo-inverse of a = s s^T by definition
        assert close(sp, np.linalg.pinv(s))
        assert close(ap, np.linalg.pinv(a, hermitian=True), tol=1e-6)
        # the identities written with conforming shapes
        assert close(s, a @ sp.T)
        assert close(s.T, sp @ a)
        assert close(sp, sp @ stp @ s.T)
        assert close(sp, s.T @ ap)


def test_regularized_limit():
    s = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    errs = [np.max(np.abs(regularized_pseudo_inverse(s, e) - tensor_pseudo_inverse(s))) for e in (1e-2, 1e-4, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] <= 1e-6


def test_batched_pinv():
    b = np.stack(random_matrices(10, seed=3)[0:1] * 4)
    out = tensor_pseudo_inverse(b)
    assert out.shape == b.shape[:1] + b.shape[2:] + b.shape[1:2]


@given(st.floats(-2, 2), st.floats(0.2, 3))
def test_log_gradient_gaussian(m, v):
    g = Grid.line(-12, 12, 2401)
    rho = gaussian_density(g, m, v)
    lg, ok = log_gradient(rho)
    sel = ok & (rho.values >= 1e-8 * rho.values.max())
    assert np.max(np.abs(lg[sel] + (g.x[sel] - m) / v)) <= 1e-4


def test_theta_equal_diffusions_exact():
    g = Grid.line(-6, 6, 241)
    rho = [gaussian_density(g, 0.0, 1.0, 0.0)]
    th = theta_field(sde.ou(1.0, math.sqrt(2)), sde.ou(2.0, math.sqrt(2)), rho)
    assert np.array_equal(th.theta[0], -g.x * 2.0 + g.x)
    dw = theta_field(sde.double_well(1.0, 1.0, 0.7), sde.ou(0.3, 0.7), rho)
    assert np.array_equal(dw.theta[0], -0.3 * g.x - (g.x - g.x**3))
    same = theta_field(sde.ou(), sde.ou(), rho)
    assert np.all(same.theta == 0)


def test_theta_unequal_diffusions_uses_log_gradient():
    g = Grid.line(-8, 8, 801)
    rho = [gaussian_density(g, 0.0, 0.5, 0.0)]
    th = theta_field(sde.ou(1.0, 1.0), sde.ou(1.0, 2.0), rho)
    # 1/2 (1 - 4) (-x / 0.5)
    assert np.allclose(th.theta[0][th.valid[0]], 3.0 * g.x[th.valid[0]], atol=1e-3)


def _analytic_case(case, n_snap=41, grid=None):
    bm, bn, sm, sn, m0, v0, t = case
    g = grid or Grid.line(-10, 10, 1601)
    times = np.linspace(0.0, t, n_snap)
    rm, rn = ou_series(g, bm, sm, m0, v0, times), ou_series(g, bn, sn, m0, v0, times)
    mu_m, mu_n = sde.ou(bm, sm), sde.ou(bn, sn)
    th = theta_field(mu_m, mu_n, rm)
    return rm, rn, th, mu_n


@pytest.mark.parametrize("case", OU_SUITE)
def test_information_bound_ou_suite(case):
    rm, rn, th, mn = _analytic_case(case)
    res = divergence_bound_reconstruction(KL, rm, rn, th, mn)
    bm, bn, sm, sn, m0, v0, t = case
    lhs = gauss_kl(*ou_moments(bm, sm, m0, v0, t), *ou_moments(bn, sn, m0, v0, t))
    assert res.lhs == pytest.approx(lhs, abs=1e-6)
    assert res.rhs - lhs >= -1e-3
    assert res.metadata["refinement_change"] < 0.01


def test_information_bound_double_well_vs_ou():
    g = Grid.line(-6, 6, 401)
    rho0 = gaussian_density(g, 0.0, 0.25)
    mm, mn = sde.double_well(-0.5, 0.2, 1.0), sde.ou(0.5, 1.0)
    times = np.linspace(0, 1, 41)
    sm, sn = fpe_solve(mm, rho0, 0.0, 1.0, record_times=times), fpe_solve(mn, rho0, 0.0, 1.0, record_times=times)
    res = divergence_bound_reconstruction(KL, sm, sn, theta_field(mm, mn, sm), mn)
    assert res.lhs > 0.01
    assert res.margin >= -1e-3


def test_identical_models_zero():
    rm, rn, th, mn = _analytic_case((1.0, 1.0, 1.0, 1.0, 0.3, 0.5, 1.0))
    res = divergence_bound_reconstruction(KL, rm, rn, th, mn)
    assert res.rhs == 0.0 and res.lhs == pytest.approx(0.0, abs=1e-12)


def test_rhs_shrinks_with_interval():
    rm, rn, th, mn = _analytic_case(OU_SUITE[0], n_snap=81)
    times = th.times
    rhs = [divergence_bound_reconstruction(KL, rm, rn, th, mn, t=times[k]).rhs for k in (80, 60, 40, 20)]
    assert all(a > b for a, b in zip(rhs, rhs[1:]))


def test_capability_and_snapshot_checks():
    rm, rn, th, mn = _analytic_case(OU_SUITE[0], n_snap=41)
    with pytest.raises(CapabilityError):
        divergence_bound_reconstruction(catalog("tv"), rm, rn, th, mn)
    with pytest.raises(ValueError):
        divergence_bound_reconstruction(KL, rm, rn, th, mn, t=th.times[10])


def test_theta_csv(tmp_path):
    rm, rn, th, mn = _analytic_case(OU_SUITE[4], n_snap=3, grid=Grid.line(-5, 5, 11))
    th.to_csv(tmp_path / "theta.csv")
    lines = (tmp_path / "theta.csv").read_text().splitlines()
    assert lines[0].startswith("t,x,theta") and len(lines) == 1 + 3 * 11
