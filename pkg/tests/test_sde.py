import math

import numpy as np
import pytest

from luq import sde
from luq.errors import SimulationError
from luq.grid import Grid
from luq.sde import RngSpec, SdeModel, generator_apply, integrate_em, strat_to_ito


def zero_model(d=1):
    return SdeModel(d, d, lambda t, X: np.zeros_like(X), lambda t, X: np.zeros((X.shape[0], d, d)), additive=True)


def test_zero_dynamics_constant():
    X0 = np.linspace(-1, 1, 50)[:, None]
    ens = integrate_em(zero_model(), X0, 0.0, 1.0, 0.01, RngSpec(3), record_times=[0.0, 0.5, 1.0])
    for X in ens.states:
        assert np.array_equal(X, X0)


def test_ou_variance_within_three_standard_errors():
    N = 100_000
    ens = integrate_em(sde.ou(1.0, math.sqrt(2.0)), np.zeros(1), 0.0, 1.0, 1e-3, RngSpec(11), n_traj=N)
    x = ens.states[-1][:, 0]
    v = x.var(ddof=1)
    exact = 1 - math.exp(-2)
    se = exact * math.sqrt(2.0 / (N - 1))
    assert abs(v - exact) <= 3 * se


def test_bit_identical_and_worker_invariant():
    m = sde.double_well(1.0, 1.0, 0.7)
    init = lambda g: np.array([g.normal()])
    runs = [integrate_em(m, init, 0.0, 0.5, 1e-2, RngSpec(5), n_traj=3000, workers=w, chunk=c)
            for w, c in [(1, None), (1, None), (4, 7), (3, 1000)]]
    for r in runs[1:]:
        assert np.array_equal(r.states, runs[0].states)
    other = integrate_em(m, init, 0.0, 0.5, 1e-2, RngSpec(6), n_traj=3000)
    assert not np.array_equal(other.states, runs[0].states)


def test_substreams_depend_only_on_index():
    a = RngSpec(9).generator(17).standard_normal(5)
    b = RngSpec(9).generator(17).standard_normal(5)
    c = RngSpec(9).substream(1).generator(17).standard_normal(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_weak_order_one():
    # EM on OU with beta=16 has relative stationary-variance bias ~ beta dt / 2
    beta, N = 16.0, 200_000
    m = sde.ou(beta, math.sqrt(2.0))
    exact = 1.0 / beta
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    errs = []
    for dt in dts:
        ens = integrate_em(m, np.zeros(1), 0.0, 0.5, dt, RngSpec(2024), n_traj=N)
        errs.append(abs(ens.states[-1][:, 0].var() - exact))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 0.8


def test_strat_to_ito_examples():
    add = sde.ou(1.0, 0.5)
    assert strat_to_ito(add) is add
    mult = sde.polynomial([0.0], [0.0, 1.0], calculus="stratonovich")
    ito = strat_to_ito(mult)
    x = np.linspace(-2, 2, 9)[:, None]
    assert ito.calculus == "ito"
    assert np.allclose(ito.b(0.0, x), 0.5 * x, atol=1e-12)
    # same with the finite-difference Jacobian
    fd = SdeModel(1, 1, lambda t, X: 0 * X, lambda t, X: X[:, :, None], calculus="stratonovich")
    assert np.allclose(strat_to_ito(fd).b(0.0, x), 0.5 * x, atol=1e-8)


def test_generator_examples():
    g = Grid.line(-3, 3, 121)
    ou = sde.ou(1.0, math.sqrt(2.0))
    assert np.allclose(generator_apply(ou, g, lambda x: 0 * x + 3.0), 0.0, atol=1e-10)
    assert np.allclose(generator_apply(ou, g, lambda x: x**2), -2 * g.x**2 + 2, atol=1e-9)
    assert np.allclose(generator_apply(sde.ou(1.0, 0.3), g, lambda x: x), -g.x, atol=1e-10)


def test_strat_generator_matches_direct_ito():
    # sigma(x) = x Stratonovich == drift x/2, sigma x Ito
    g = Grid.line(-2, 2, 201)
    strat = strat_to_ito(SdeModel(1, 1, lambda t, X: -X, lambda t, X: X[:, :, None], calculus="stratonovich"))
    direct = SdeModel(1, 1, lambda t, X: -0.5 * X, lambda t, X: X[:, :, None])
    f = lambda x: np.sin(x)
    assert np.max(np.abs(generator_apply(strat, g, f) - generator_apply(direct, g, f))) <= 1e-6


def test_blowup_raises():
    m = sde.polynomial([0.0, 0.0, 0.0, 1.0], [0.1])
    with pytest.raises(SimulationError):
        integrate_em(m, np.full((10, 1), 5.0), 0.0, 10.0, 0.1, RngSpec(0))


def test_ensemble_csv(tmp_path):
    ens = integrate_em(sde.ou(), np.zeros((3, 1)), 0.0, 0.1, 0.05, RngSpec(0))
    p = tmp_path / "e.csv"
    ens.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,traj,x1" and len(lines) == 1 + 2 * 3


def test_linear_2d_mean():
    m = sde.linear([[-1.0, 0.0], [0.0, -2.0]], np.zeros((2, 2)))
    ens = integrate_em(m, np.ones(2), 0.0, 1.0, 1e-4, RngSpec(0), n_traj=2)
    assert np.allclose(ens.states[-1][0], [math.exp(-1), math.exp(-2)], rtol=1e-3)
