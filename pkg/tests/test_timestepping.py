"""Time grid and temporal table properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lv_optctl.fem import FeSpace
from lv_optctl.mesh import build_structured
from lv_optctl.timestepping import SpaceTimeField, TimeGrid, temporal_tables, time_quadrature


@pytest.fixture(scope="module")
def space():
    return FeSpace(build_structured(2), 1)


def test_uniform_grid():
    grid = TimeGrid.uniform(0.1, 4)
    assert grid.num_steps == 4
    assert grid.horizon == pytest.approx(0.1)
    assert np.allclose(grid.tau, 0.025)
    assert grid.quasi_uniformity == pytest.approx(1.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.1, 0.2]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.2, 0.2]))
    with pytest.raises(ValueError):
        TimeGrid.uniform(-1.0, 3)


def test_interval_lookup_left_continuous():
    grid = TimeGrid(np.array([0.0, 0.25, 0.5, 1.0]))
    # knots belong to the interval ending there
    assert grid.interval_of(0.25) == 0
    assert grid.interval_of(0.26) == 1
    assert grid.interval_of(1.0) == 2
    with pytest.raises(ValueError):
        grid.interval_of(0.0)
    with pytest.raises(ValueError):
        grid.interval_of(1.01)


def test_tables_k0():
    tab = temporal_tables(0)
    assert np.allclose(tab["tmass"], [[1.0]])
    assert np.allclose(tab["jump"], [[1.0]])
    assert np.allclose(tab["e_prev"], [1.0])
    assert np.allclose(tab["qr_s"], [0.5])


def test_tables_k1():
    tab = temporal_tables(1)
    assert np.allclose(tab["tmass"], [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    assert np.allclose(tab["jump"], [[0.5, 0.5], [-0.5, 0.5]])
    assert np.allclose(tab["e_prev"], [1.0, 0.0])
    # jump table row a applies to coefficients c as:
    # integral of c' psi_a over the interval plus c(0+) psi_a(0)
    for a in range(2):
        for c in (np.array([1.0, 1.0]), np.array([0.0, 1.0]), np.array([2.0, -1.0])):
            psi0 = np.array([1.0, 0.0])
            deriv = c[1] - c[0]
            s, w = tab["q2_s"], tab["q2_w"]
            psi_a = (1.0 - s, s)[a]
            expected = deriv * np.dot(w, psi_a) + c[0] * psi0[a]
            assert tab["jump"][a] @ c == pytest.approx(expected)


def test_temporal_degree_validation():
    with pytest.raises(ValueError):
        temporal_tables(2)


def test_time_quadrature_cubic_exact():
    # two point Gauss integrates cubics exactly
    val = time_quadrature(lambda t: t**3 - 2 * t, 0.3, 1.1)
    exact = (1.1**4 - 0.3**4) / 4 - (1.1**2 - 0.3**2)
    assert val == pytest.approx(exact, abs=1e-14)
    assert time_quadrature(lambda t: t**4, 0.0, 1.0) != pytest.approx(0.2, abs=1e-6)
    with pytest.raises(ValueError):
        time_quadrature(lambda t: t, 1.0, 1.0)


@pytest.mark.parametrize("k", [0, 1])
def test_field_shapes_and_constant(space, k):
    grid = TimeGrid.uniform(1.0, 3)
    f = SpaceTimeField.constant(space, grid, k, 2.5)
    assert f.coeffs.shape == (3, k + 1, space.ndof)
    assert np.allclose(f.eval(0.4), 2.5)
    assert np.allclose(f.end_value(2), 2.5)


def test_field_eval_linear_in_time(space):
    grid = TimeGrid.uniform(1.0, 2)
    f = SpaceTimeField.zeros(space, grid, 1)
    f.coeffs[0, 0] = 1.0
    f.coeffs[0, 1] = 3.0
    f.coeffs[1, 0] = 5.0
    f.coeffs[1, 1] = 7.0
    assert np.allclose(f.eval(0.25), 2.0)
    # left-continuity at the knot
    assert np.allclose(f.eval(0.5), 3.0)
    assert np.allclose(f.eval(0.75), 6.0)
    assert np.allclose(f.at_local(1, 0.5), 6.0)
    assert np.allclose(f.at_local(0, 0.0), 1.0)


def test_field_shape_mismatch(space):
    grid = TimeGrid.uniform(1.0, 2)
    with pytest.raises(ValueError):
        SpaceTimeField(space, grid, 0, np.zeros((2, 2, space.ndof)))
    with pytest.raises(ValueError):
        SpaceTimeField(space, grid, 2)


@given(st.lists(st.floats(min_value=1e-3, max_value=1.0), min_size=2, max_size=8))
@settings(max_examples=30, deadline=None)
def test_grid_from_increments(taus):
    knots = np.concatenate([[0.0], np.cumsum(taus)])
    grid = TimeGrid(knots)
    assert grid.num_steps == len(taus)
    assert grid.quasi_uniformity >= 1.0
    assert np.allclose(grid.tau, taus)
