"""Coupled state solver behavior."""

import numpy as np
import pytest

from _oracles import implicit_euler_trajectory
from lv_optctl.errors import BlowUpError, NewtonError
from lv_optctl.fem import FeSpace, assemble_load, interpolate, solve_sparse
from lv_optctl.mesh import build_structured
from lv_optctl.presets import PRESETS, base_params, build_data
from lv_optctl.state_solver import (
    Discretization,
    FieldTarget,
    ModelParams,
    ProblemData,
    SeparableForcing,
    solve_state,
)
from lv_optctl.timestepping import SpaceTimeField, TimeGrid


def robin_setup(n=4, N=5, T=0.05, y10=None, y20=None):
    params = ModelParams(control_kind="robin")
    space = FeSpace(build_structured(n), 1, "free")
    grid = TimeGrid.uniform(T, N)
    data = ProblemData(
        y10=y10 or (lambda x1, x2: 16.0 + x1 * x2),
        y20=y20 or (lambda x1, x2: 25.0 + 0.0 * x1),
        y1d=lambda t, x1, x2: 0.0 * x1,
        y2d=lambda t, x1, x2: 20.0 + 0.0 * x1,
        T=T,
    )
    return params, data, space, grid


def test_dg0_is_backward_euler_on_smooth_preset():
    # the piecewise constant variant must reproduce backward Euler stepping
    preset = PRESETS["A"]
    params = base_params(preset)
    data = build_data(preset, params)
    space = FeSpace(build_structured(6), 1, "dirichlet")
    grid = TimeGrid.uniform(data.T, 10)
    state = solve_state(params, data, space, grid, 0, newton_tol=1e-12)
    oracle = implicit_euler_trajectory(params, data, space, grid)
    for n, (o1, o2) in enumerate(oracle):
        assert np.max(np.abs(state.y1.end_value(n) - o1)) < 1e-10
        assert np.max(np.abs(state.y2.end_value(n) - o2)) < 1e-10


def test_dg0_is_backward_euler_robin():
    params, data, space, grid = robin_setup()
    state = solve_state(params, data, space, grid, 0, newton_tol=1e-12)
    oracle = implicit_euler_trajectory(params, data, space, grid)
    for n, (o1, o2) in enumerate(oracle):
        assert np.max(np.abs(state.y1.end_value(n) - o1)) < 1e-10
        assert np.max(np.abs(state.y2.end_value(n) - o2)) < 1e-10


@pytest.mark.slow
def test_temporal_orders():
    params, data, space, _ = robin_setup(n=4, T=0.4)
    ref = solve_state(params, data, space, TimeGrid.uniform(0.4, 128), 1)
    refend1 = ref.y1.end_value(127)
    errs = {}
    for k in (0, 1):
        errs[k] = []
        for N in (4, 8, 16):
            st = solve_state(params, data, space, TimeGrid.uniform(0.4, N), k)
            errs[k].append(np.max(np.abs(st.y1.end_value(N - 1) - refend1)))
    r0 = [errs[0][i] / errs[0][i + 1] for i in range(2)]
    r1 = [errs[1][i] / errs[1][i + 1] for i in range(2)]
    # first order for the constant, at least second for the linear variant
    assert all(1.5 < r < 2.6 for r in r0), r0
    assert all(3.0 < r for r in r1), r1


def test_constant_state_without_reaction_or_flux():
    # a=b=c=d=0 with Neumann-like zero lambda: densities stay frozen
    params = ModelParams(a=0.0, b=0.0, c=0.0, d=0.0, lambda1=0.0, lambda2=0.0, control_kind="robin")
    space = FeSpace(build_structured(3), 1, "free")
    grid = TimeGrid.uniform(1.0, 5)
    data = ProblemData(
        y10=lambda x1, x2: 4.0 + 0.0 * x1,
        y20=lambda x1, x2: 9.0 + 0.0 * x1,
        y1d=lambda t, x1, x2: 0.0 * x1,
        y2d=lambda t, x1, x2: 0.0 * x1,
        T=1.0,
    )
    st = solve_state(params, data, space, grid, 0)
    assert np.allclose(st.y1.coeffs, 4.0, atol=1e-9)
    assert np.allclose(st.y2.coeffs, 9.0, atol=1e-9)


def test_newton_iteration_budget():
    params, data, space, grid = robin_setup()
    with pytest.raises(NewtonError):
        solve_state(params, data, space, grid, 0, max_newton=0)
    st = solve_state(params, data, space, grid, 0)
    assert st.newton_iters.shape == (grid.num_steps,)
    assert st.max_newton_iters >= 1


def test_blowup_guard():
    params, data, space, grid = robin_setup(
        y10=lambda x1, x2: 2.0e6 + 0.0 * x1, y20=lambda x1, x2: 2.0e6 + 0.0 * x1
    )
    with pytest.raises(BlowUpError) as err:
        solve_state(params, data, space, grid, 0)
    assert err.value.interval == 0
    assert err.value.norm > 1.0e6


def test_separable_forcing_matches_generic_load():
    space = FeSpace(build_structured(3), 2, "free")
    sf = SeparableForcing(
        [
            (np.sin, lambda x1, x2: x1 + x2),
            (lambda t: t**2, lambda x1, x2: np.cos(np.pi * x1)),
        ]
    )
    for t in (0.0, 0.3, 1.7):
        direct = assemble_load(space, lambda x1, x2: sf(t, x1, x2))
        assert np.allclose(sf.load(space, t), direct, atol=1e-14)
    # cached loads reused for the same space object
    assert len(sf._loads) == 1


def test_field_target_resampling():
    fine = FeSpace(build_structured(4), 1, "free")
    grid = TimeGrid.uniform(1.0, 2)
    f = SpaceTimeField.zeros(fine, grid, 0)
    f.coeffs[0, 0] = interpolate(fine, lambda x, y: x + 2 * y)
    f.coeffs[1, 0] = interpolate(fine, lambda x, y: 3 * x)
    tgt = FieldTarget(f)
    coarse = FeSpace(build_structured(2), 1, "free")
    got = tgt.nodal(coarse, 0.4)
    want = interpolate(coarse, lambda x, y: x + 2 * y)
    assert np.allclose(got, want, atol=1e-13)
    # times at and beyond the ends clamp into the trajectory's range
    assert np.allclose(tgt.nodal(coarse, 0.0), want, atol=1e-13)
    assert np.allclose(tgt.nodal(coarse, 2.5), interpolate(coarse, lambda x, y: 3 * x), atol=1e-13)


def test_projected_initial_data():
    space = FeSpace(build_structured(4), 1, "free")
    grid = TimeGrid.uniform(0.01, 1)
    jump = lambda x1, x2: np.where(x1 < 0.5, 1.0, 10.0)
    data = ProblemData(
        y10=jump,
        y20=lambda x1, x2: 1.0 + x1,
        y1d=lambda t, x1, x2: 0.0 * x1,
        y2d=lambda t, x1, x2: 0.0 * x1,
        T=0.01,
        project_initial=True,
    )
    disc = Discretization(ModelParams(control_kind="robin"), data, space, grid, 0)
    want = solve_sparse(space.mass, assemble_load(space, jump))
    assert np.allclose(disc.y10, want, atol=1e-12)
    # projection reproduces members of the space exactly
    assert np.allclose(disc.y20, interpolate(space, lambda x1, x2: 1.0 + x1), atol=1e-10)


def test_validation_errors():
    params, data, space, grid = robin_setup()
    with pytest.raises(ValueError):
        ProblemData(y10=data.y10, y20=data.y20, y1d=data.y1d, y2d=data.y2d, T=0.0)
    with pytest.raises(ValueError):
        Discretization(params, data, space, TimeGrid.uniform(0.06, 5), 0)
    with pytest.raises(ValueError):
        Discretization(ModelParams(), data, space, grid, 0)  # distributed on a free space
    dir_space = FeSpace(build_structured(4), 1, "dirichlet")
    with pytest.raises(ValueError):
        Discretization(params, data, dir_space, grid, 0)
    bad = ProblemData(y10=np.zeros(7), y20=data.y20, y1d=data.y1d, y2d=data.y2d, T=0.05)
    with pytest.raises(ValueError):
        Discretization(params, bad, space, grid, 0)
