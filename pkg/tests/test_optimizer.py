"""Projected NCG behavior on small control problems."""

import numpy as np
import pytest

from lv_optctl.fem import FeSpace
from lv_optctl.mesh import build_structured
from lv_optctl.objective import ControlPair, control_norm
from lv_optctl.optimizer import NcgConfig, optimize
from lv_optctl.state_solver import Discretization, FieldTarget, ModelParams, ProblemData
from lv_optctl.timestepping import TimeGrid


def tracking_disc(kind="distributed", n=3, N=3, T=0.05, **params_kw):
    """Discretization whose targets are its own uncontrolled trajectory.

    The reduced functional is then minimized exactly at g = 0 with value 0,
    a convenient surrogate with a known answer.
    """
    params = ModelParams(control_kind=kind, **params_kw)
    bc = "dirichlet" if kind == "distributed" else "free"
    space = FeSpace(build_structured(n), 1, bc)
    data = ProblemData(
        y10=lambda x1, x2: 16.0 + 0.25 * (x1**2 + x2**2),
        y20=lambda x1, x2: 25.0 + 0.0 * x1,
        y1d=lambda t, x1, x2: 0.0 * x1,
        y2d=lambda t, x1, x2: 20.0 + 0.0 * x1,
        T=T,
    )
    disc = Discretization(params, data, space, TimeGrid.uniform(T, N), k=0)
    st = disc.solve_state(ControlPair.zeros(disc))
    disc.data.y1d = FieldTarget(st.y1)
    disc.data.y2d = FieldTarget(st.y2)
    disc._target_cache = {}
    return disc


@pytest.mark.parametrize("kind", ["distributed", "robin"])
def test_recovers_zero_control(kind):
    disc = tracking_disc(kind)
    run = optimize(disc, NcgConfig(), g0=ControlPair.constant(disc, 1.0))
    assert run.converged
    assert run.parts["J"] < 1e-7
    assert control_norm(disc, run.controls) < 5e-2
    assert run.iterations < 200


def test_history_non_increasing_and_counters():
    disc = tracking_disc("robin")
    run = optimize(disc, NcgConfig(), g0=ControlPair.constant(disc, 0.5))
    J = [h["J"] for h in run.history]
    assert all(b <= a + 1e-14 for a, b in zip(J, J[1:]))
    assert run.history[0]["iter"] == 0
    assert run.n_state_solves >= run.iterations + 1
    assert run.n_adjoint_solves >= run.iterations
    assert run.message


def test_projected_iterates_stay_in_box():
    disc = tracking_disc("distributed", g_lo=0.0, g_hi=0.1)
    run = optimize(disc, NcgConfig(), g0=ControlPair.constant(disc, 5.0))
    assert all(h["g_min"] >= 0.0 and h["g_max"] <= 0.1 for h in run.history)
    # the infeasible start is projected before the first evaluation
    assert run.history[0]["g_max"] <= 0.1
    assert run.controls.admissible()


def test_bracket_line_search_variant():
    disc = tracking_disc("robin")
    run = optimize(disc, NcgConfig(line_search="bracket"), g0=ControlPair.constant(disc, 0.5))
    assert run.converged
    assert run.parts["J"] < 1e-6


def test_full_adjoint_mode_converges():
    disc = tracking_disc("distributed")
    run = optimize(disc, NcgConfig(full_adjoint=True), g0=ControlPair.constant(disc, 1.0))
    assert run.converged
    assert run.parts["J"] < 1e-7


def test_iteration_limit_reported():
    disc = tracking_disc("robin")
    run = optimize(disc, NcgConfig(max_iters=0), g0=ControlPair.constant(disc, 1.0))
    assert not run.converged
    assert "limit" in run.message
    assert len(run.history) == 1


def test_zero_start_is_already_optimal():
    disc = tracking_disc("robin")
    run = optimize(disc, NcgConfig())
    assert run.converged
    assert run.iterations <= 1
    assert run.parts["J"] <= 1e-12
