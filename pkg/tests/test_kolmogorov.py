import math

import numpy as np
import pytest
from scipy.stats import norm

from luq import sde
from luq.divergence import catalog, divergence
from luq.errors import StabilityError
from luq.grid import Grid, GridDensity, gaussian_density
from luq.kolmogorov import (conditional, effective_coefficients, fpe_solve, kde_estimate, l1_error, marginalize,
                            silverman_bandwidth)
from luq.sde import RngSpec, SdeModel, integrate_em
from luq.slowfast import SlowFastParams, averaged_model, fast_invariant_density, full_model


def ou_exact(v0, t, beta=1.0, sigma=math.sqrt(2.0)):
    return v0 * math.exp(-2 * beta * t) + sigma**2 / (2 * beta) * (1 - math.exp(-2 * beta * t))


def test_zero_dynamics_leave_density_unchanged():
    g = Grid.line(-5, 5, 101)
    rho0 = gaussian_density(g, 0.3, 0.5)
    m = SdeModel(1, 1, lambda t, X: 0 * X, lambda t, X: np.zeros((X.shape[0], 1, 1)), additive=True)
    sol = fpe_solve(m, rho0, 0.0, 1.0, 0.01)
    assert np.array_equal(sol.final.values, rho0.values)


def test_ou_accuracy_conservation_positivity():
    g = Grid.line(-8, 8, 801)
    sol = fpe_solve(sde.ou(), gaussian_density(g, 0.0, 0.25), 0.0, 1.0, record_times=np.linspace(0, 1, 11))
    v = ou_exact(0.25, 1.0)
    assert v == pytest.approx(0.89849, abs=1e-5)
    assert sol.final.var() == pytest.approx(v, abs=1e-3)
    assert l1_error(sol.final, lambda x: norm.pdf(x, 0, math.sqrt(v))) <= 1e-2
    assert sol.diagnostics["mass_drift"] <= 1e-6
    assert all(np.all(d.values >= 0) for d in sol.densities)
    assert all(abs(d.mass() - 1) <= 1e-6 for d in sol.densities)


def test_refinement_factor():
    errs = []
    for n in (201, 401, 801):
        g = Grid.line(-8, 8, n)
        sol = fpe_solve(sde.ou(), gaussian_density(g, 0.0, 0.25), 0.0, 1.0)
        errs.append(l1_error(sol.final, lambda x: norm.pdf(x, 0, math.sqrt(ou_exact(0.25, 1.0)))))
    assert errs[0] / errs[1] >= 1.7 and errs[1] / errs[2] >= 1.7


def test_stability_error_carries_admissible_step():
    g = Grid.line(-8, 8, 801)
    with pytest.raises(StabilityError) as e:
        fpe_solve(sde.ou(), gaussian_density(g, 0.0, 0.25), 0.0, 1.0, dt=0.1)
    assert 0 < e.value.required_dt < 0.1


def test_averaged_model_stationary_mean():
    p = SlowFastParams(1, 1, 1, 1, 0.05)
    g = Grid.line(-6, 7, 261)
    sol = fpe_solve(averaged_model(p), gaussian_density(g, 0.0, 0.25), 0.0, 12.0)
    assert sol.final.mean() == pytest.approx(0.5, abs=1e-3)


def test_fpe_vs_ensemble_kde():
    g = Grid.line(-8, 8, 401)
    sol = fpe_solve(sde.ou(), gaussian_density(g, 0.0, 0.25), 0.0, 1.0)
    init = lambda gen: np.array([gen.normal(0, 0.5)])
    ens = integrate_em(sde.ou(), init, 0.0, 1.0, 1e-3, RngSpec(1), n_traj=100_000)
    kde = kde_estimate(ens.states[-1], g)
    assert g.integrate(np.abs(kde.values - sol.final.values)) <= 2e-2


def test_kde_single_point_identity():
    g = Grid.line(-3, 3, 601)
    kde = kde_estimate(np.zeros((50, 1)), g, bandwidth=0.4)
    assert np.max(np.abs(kde.values - norm.pdf(g.x, 0, 0.4))) <= 1e-3
    direct = kde_estimate(np.zeros((50, 1)), g, bandwidth=0.4, method="direct")
    assert np.max(np.abs(direct.values - norm.pdf(g.x, 0, 0.4))) <= 1e-9


def test_kde_normal_sample():
    g = Grid.line(-8, 8, 801)
    X = np.random.default_rng(12345).standard_normal((100_000, 1))
    kde = kde_estimate(X, g)
    assert abs(kde.mass() - 1) <= 1e-9
    assert divergence(catalog("kl"), kde, gaussian_density(g, 0.0, 1.0)) <= 5e-3


def test_silverman_rule():
    X = np.random.default_rng(0).standard_normal((10_000, 1))
    h = silverman_bandwidth(X)
    assert float(np.ravel(h)[0]) == pytest.approx(1.06 * X.std(ddof=1) * 10_000 ** -0.2, rel=0.1)


def test_marginalize_and_conditional():
    g = Grid((-8, -6), (8, 6), (161, 121))
    f = lambda x: norm.pdf(x, 0.5, 1.2)
    gy = lambda y: norm.pdf(y, -0.2, 0.8)
    joint = GridDensity.from_function(g, lambda x, y: f(x) * gy(y))
    m = marginalize(joint)
    assert abs(m.mass() - 1) <= 1e-12
    assert l1_error(m, f) <= 1e-6
    c = conditional(joint)
    assert np.allclose(c.column_mass()[c.defined], 1.0, atol=1e-8)
    col = c.values[80]
    assert np.max(np.abs(col - gy(g.axes[1]) / np.sum(c.weights_y() * gy(g.axes[1])))) <= 1e-8


def test_standard_gaussian_marginal_and_correlated_conditional():
    g = Grid((-8, -8), (8, 8), (161, 161))
    std = gaussian_density(g, (0.0, 0.0), np.eye(2))
    assert l1_error(marginalize(std), norm.pdf) <= 1e-6
    corr = gaussian_density(g, (0.0, 0.0), [[1.0, 0.5], [0.5, 1.0]])
    c = conditional(corr)
    i = int(np.argmin(np.abs(g.axes[0] - 1.0)))
    assert c.expect(lambda y: y)[i] == pytest.approx(0.5, abs=1e-6)


def test_effective_coefficients():
    p = SlowFastParams(1, 1, 1, 1, 0.05)
    g = Grid((-4, -5), (4, 5), (81, 201))
    pi = fast_invariant_density(p, Grid.line(-5, 5, 201))
    joint = GridDensity.from_function(g, lambda x, y: norm.pdf(x) * np.interp(y, pi.grid.x, pi.values))
    c = conditional(joint)
    b, s = effective_coefficients(full_model(p), None, c)
    x = g.axes[0]
    assert np.allclose(b[c.defined], -x[c.defined] + 0.5, atol=1e-6)
    assert np.allclose(s[c.defined, 0], 1.0, atol=1e-12)
    # b independent of y
    b2, _ = effective_coefficients(lambda t, X: np.stack([np.sin(X[:, 0]), 0 * X[:, 0]], 1),
                                   lambda t, X: np.ones((X.shape[0], 2, 1)), c)
    assert np.allclose(b2[c.defined], np.sin(x[c.defined]), atol=1e-12)


def test_fpe_sidecar(tmp_path):
    g = Grid.line(-4, 4, 81)
    sol = fpe_solve(sde.ou(), gaussian_density(g, 0.0, 0.5), 0.0, 0.2, record_times=[0.1, 0.2])
    sol.to_csv(tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert any(n.endswith(".json") for n in names) and sum(n.endswith(".csv") for n in names) == 3
