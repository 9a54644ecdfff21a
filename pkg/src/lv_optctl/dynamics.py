"""Phase-plane analysis of the spatially homogeneous kinetics.

With constant controls (s1, s2) the kinetics are

    y1' = (a - b y2) y1 + s1
    y2' = (c y1 - d) y2 + s2

Fixed points, their linearization data (trace, determinant, discriminant)
and the classical first integral of the uncontrolled system live here;
nothing in this module touches the spatial discretization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq  # noqa: F401  (re-exported convenience in some CLI paths)

from lv_optctl.errors import RootFindError
from lv_optctl.state_solver import ModelParams

__all__ = [
    "FixedPointReport",
    "fixed_points",
    "classify",
    "kinetics_jacobian",
    "first_integral",
    "simulate_kinetics",
]

_TRACE_TOL = 1e-12


@dataclass(frozen=True)
class FixedPointReport:
    y1: float
    y2: float
    trace: float
    det: float
    discriminant: float
    label: str

    @property
    def location(self) -> tuple[float, float]:
        return (self.y1, self.y2)


def kinetics_jacobian(params: ModelParams, y1: float, y2: float) -> np.ndarray:
    p = params
    return np.array(
        [
            [p.a - p.b * y2, -p.b * y1],
            [p.c * y2, p.c * y1 - p.d],
        ]
    )


def classify(params: ModelParams, y1: float, y2: float) -> FixedPointReport:
    """Linearization data and stability label at a point of the plane."""
    J = kinetics_jacobian(params, y1, y2)
    T = float(np.trace(J))
    Delta = float(np.linalg.det(J))
    D = T * T - 4.0 * Delta
    scale = max(1.0, float(np.abs(J).max()))
    if Delta < 0:
        label = "saddle"
    elif abs(T) <= _TRACE_TOL * scale:
        label = "center (borderline)" if Delta > 0 else "degenerate"
    elif D < 0:
        label = "stable spiral" if T < 0 else "unstable spiral"
    elif Delta == 0:
        label = "degenerate"
    else:
        label = "stable node" if T < 0 else "unstable node"
    return FixedPointReport(y1=float(y1), y2=float(y2), trace=T, det=Delta, discriminant=D, label=label)


def _newton_polish(params: ModelParams, s1: float, s2: float, y1: float, y2: float) -> tuple[float, float]:
    p = params
    y = np.array([y1, y2], dtype=float)
    for _ in range(50):
        f = np.array(
            [
                (p.a - p.b * y[1]) * y[0] + s1,
                (p.c * y[0] - p.d) * y[1] + s2,
            ]
        )
        if np.abs(f).max() < 1e-14 * max(1.0, np.abs(y).max()):
            return float(y[0]), float(y[1])
        J = kinetics_jacobian(p, y[0], y[1])
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError as exc:
            raise RootFindError(f"singular kinetics Jacobian near {tuple(y)}") from exc
        y = y + step
    raise RootFindError(f"fixed point refinement stalled near {tuple(y)}")


def fixed_points(params: ModelParams, s1: float = 0.0, s2: float = 0.0) -> list[FixedPointReport]:
    """All finite fixed points of the controlled kinetics, classified.

    Uncontrolled: the origin and the coexistence point (d/c, a/b). With
    constant controls, eliminating y1 gives the quadratic

        b d y2^2 - (c s1 + a d + b s2) y2 + a s2 = 0

    whose real roots are polished by a planar Newton iteration. Points are
    returned sorted by ascending y1.
    """
    p = params
    if min(p.b, p.c, p.d) <= 0 or p.a <= 0:
        raise RootFindError("fixed point analysis requires positive kinetics coefficients")
    out: list[FixedPointReport] = []
    if s1 == 0.0 and s2 == 0.0:
        out.append(classify(p, 0.0, 0.0))
        out.append(classify(p, p.d / p.c, p.a / p.b))
        return out

    A = p.b * p.d
    B = -(p.c * s1 + p.a * p.d + p.b * s2)
    C = p.a * s2
    disc = B * B - 4.0 * A * C
    if disc < 0:
        return out
    roots = np.sort(np.roots([A, B, C]).real) if disc >= 0 else []
    for y2 in roots:
        denom = p.a - p.b * y2
        if abs(denom) < 1e-14:
            # y1 leg of the nullcline escapes to infinity
            continue
        y1 = -s1 / denom
        y1, y2 = _newton_polish(p, s1, s2, y1, y2)
        out.append(classify(p, y1, y2))
    out.sort(key=lambda r: r.y1)
    return out


def first_integral(params: ModelParams, y1, y2):
    """Conserved quantity of the uncontrolled kinetics.

    V = c y1 - d log y1 + b y2 - a log y2; constant along orbits in the
    open positive quadrant.
    """
    p = params
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("the first integral lives in the open positive quadrant")
    return p.c * y1 - p.d * np.log(y1) + p.b * y2 - p.a * np.log(y2)


def simulate_kinetics(
    params: ModelParams,
    y10: float,
    y20: float,
    T: float,
    s1: float = 0.0,
    s2: float = 0.0,
    rtol: float = 1e-10,
    num_samples: int = 400,
):
    """Integrate the planar kinetics; returns (t, y1, y2) sample arrays."""
    p = params

    def rhs(t, y):
        return [(p.a - p.b * y[1]) * y[0] + s1, (p.c * y[0] - p.d) * y[1] + s2]

    t_eval = np.linspace(0.0, T, num_samples)
    sol = solve_ivp(rhs, (0.0, T), [y10, y20], method="RK45", rtol=rtol, atol=rtol * 1e-2, t_eval=t_eval)
    if not sol.success:
        raise RootFindError(f"kinetics integration failed: {sol.message}")
    return sol.t, sol.y[0], sol.y[1]
