"""Planar kinetics: fixed points, classification, conservation."""

import numpy as np
import pytest

from lv_optctl.dynamics import (
    classify,
    first_integral,
    fixed_points,
    kinetics_jacobian,
    simulate_kinetics,
)
from lv_optctl.errors import RootFindError
from lv_optctl.state_solver import ModelParams

P = ModelParams()


def test_uncontrolled_fixed_points():
    fps = fixed_points(P)
    assert len(fps) == 2
    origin, coex = fps
    assert origin.location == (0.0, 0.0)
    assert origin.label == "saddle"
    # coexistence point (d/c, a/b)
    assert coex.y1 == pytest.approx(33.0435, abs=1e-3)
    assert coex.y2 == pytest.approx(19.5833, abs=1e-3)
    assert coex.y1 == pytest.approx(P.d / P.c, rel=1e-14)
    assert coex.y2 == pytest.approx(P.a / P.b, rel=1e-14)


def test_coexistence_is_linear_center():
    coex = fixed_points(P)[1]
    assert abs(coex.trace) <= 1e-12
    assert coex.det > 0
    assert coex.discriminant < 0
    assert "center" in coex.label


@pytest.mark.parametrize(
    "s,expected",
    [
        (1.0, (30.966, 20.928)),
        (2.0, (29.168, 22.440)),
        (4.0, (26.331, 25.912)),
    ],
)
def test_stocking_shifts_coexistence(s, expected):
    fps = fixed_points(P, s, s)
    # the interior point is the one near the uncontrolled coexistence
    interior = min(fps, key=lambda r: abs(r.y1 - 33.0) + abs(r.y2 - 19.6))
    assert interior.y1 == pytest.approx(expected[0], abs=1e-2)
    assert interior.y2 == pytest.approx(expected[1], abs=1e-2)
    # stocking both species turns the center into a stable spiral
    assert interior.trace < 0
    assert interior.discriminant < 0


def test_controlled_points_satisfy_kinetics():
    for r in fixed_points(P, 2.0, 2.0):
        f1 = (P.a - P.b * r.y2) * r.y1 + 2.0
        f2 = (P.c * r.y1 - P.d) * r.y2 + 2.0
        assert abs(f1) < 1e-10 and abs(f2) < 1e-10


def test_jacobian_entries():
    J = kinetics_jacobian(P, 10.0, 20.0)
    assert J[0, 0] == pytest.approx(P.a - P.b * 20.0)
    assert J[0, 1] == pytest.approx(-P.b * 10.0)
    assert J[1, 0] == pytest.approx(P.c * 20.0)
    assert J[1, 1] == pytest.approx(P.c * 10.0 - P.d)


def test_classify_saddle_vs_node():
    # pure saddle: diagonal with opposite signs at the origin
    rep = classify(P, 0.0, 0.0)
    assert rep.det == pytest.approx(-P.a * P.d)
    assert rep.label == "saddle"


def test_first_integral_conserved_along_orbit():
    t, y1, y2 = simulate_kinetics(P, 16.125, 24.0, 50.0)
    v = first_integral(P, y1, y2)
    assert np.max(np.abs(v - v[0])) < 1e-6
    # sanity: the orbit is a genuine cycle away from the fixed point
    assert y1.max() - y1.min() > 1.0


def test_first_integral_domain():
    with pytest.raises(ValueError):
        first_integral(P, -1.0, 5.0)
    with pytest.raises(ValueError):
        first_integral(P, np.array([1.0, 0.0]), np.array([1.0, 1.0]))


def test_first_integral_critical_at_coexistence():
    eps = 1e-6
    y1s, y2s = P.d / P.c, P.a / P.b
    v0 = first_integral(P, y1s, y2s)
    for dy1, dy2 in ((eps, 0.0), (0.0, eps), (-eps, eps)):
        assert first_integral(P, y1s + dy1, y2s + dy2) >= v0


def test_simulate_kinetics_controlled_drifts_inward():
    # with stocking the orbit spirals toward the shifted equilibrium
    t, y1, y2 = simulate_kinetics(P, 16.125, 24.0, 400.0, 1.0, 1.0)
    target = fixed_points(P, 1.0, 1.0)
    interior = min(target, key=lambda r: abs(r.y1 - 31.0))
    assert abs(y1[-1] - interior.y1) + abs(y2[-1] - interior.y2) < 1.0


def test_fixed_points_validation():
    from dataclasses import replace

    with pytest.raises(RootFindError):
        fixed_points(replace(P, d=0.0))
