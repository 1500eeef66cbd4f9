import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from luq.errors import GridMismatchError
from luq.grid import (DiscreteDistribution, Grid, GridDensity, gaussian_density, read_density_csv,
                      trapezoid_weights, write_density_csv)


def test_trapezoid_weights():
    w = trapezoid_weights(5, 0.5)
    assert np.allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])


def test_uniform_spacing_and_mass():
    g = Grid.line(-3, 5, 81)
    assert np.allclose(np.diff(g.x), g.spacing[0])
    d = GridDensity.from_function(g, lambda x: np.exp(-x**2))
    assert d.mass() == pytest.approx(1.0, abs=1e-12)


def test_negative_values_rejected():
    g = Grid.line(0, 1, 11)
    with pytest.raises(ValueError):
        GridDensity(g, -np.ones(11))
    with pytest.raises(ValueError):
        GridDensity(g, np.ones(10))


def test_discrete_sum_tolerance():
    DiscreteDistribution([0.5, 0.5 + 5e-13])
    with pytest.raises(ValueError):
        DiscreteDistribution([0.5, 0.5 + 1e-9])


def test_grid_mismatch():
    a, b = Grid.line(0, 1, 11), Grid.line(0, 1, 12)
    with pytest.raises(GridMismatchError):
        a.check_same(b)


def test_gaussian_2d_moments():
    g = Grid((-8, -8), (8, 8), (161, 161))
    d = gaussian_density(g, (1.0, -0.5), [[1.0, 0.3], [0.3, 0.5]])
    assert d.mean(0) == pytest.approx(1.0, abs=1e-8)
    assert d.mean(1) == pytest.approx(-0.5, abs=1e-8)
    assert d.var(1) == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("dims", [1, 2])
def test_csv_roundtrip(tmp_path, dims):
    g = Grid.line(-4, 4, 33) if dims == 1 else Grid((-4, -3), (4, 3), (17, 13))
    mean, var = (0.3, 0.8) if dims == 1 else ((0.3, 0.1), np.diag([0.8, 1.2]))
    d = gaussian_density(g, mean, var)
    path = tmp_path / "rho.csv"
    write_density_csv(d, path)
    header = path.read_text().splitlines()[0]
    assert header == ("x,rho" if dims == 1 else "x,y,rho")
    back = read_density_csv(path, normalize=False)
    assert back.grid == g
    assert np.array_equal(back.values, d.values)


@given(st.lists(st.floats(0, 10), min_size=3, max_size=40).filter(lambda v: sum(v) > 0))
def test_from_values_normalizes(vals):
    g = Grid.line(0, 1, len(vals))
    v = np.asarray(vals)
    if g.integrate(v) <= 0:
        return
    d = GridDensity.from_values(g, v)
    assert abs(d.mass() - 1) <= 1e-6
    assert np.all(d.values >= 0)
