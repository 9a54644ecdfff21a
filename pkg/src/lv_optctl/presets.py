"""Benchmark presets: mesh ladder, data builders and reference targets.

Five named configurations (A, B, D, E1, E2) cover the combinations of
control kind, temporal degree k, spatial degree and data regularity that
the study tables report. Each study row solves on a structured n x n
crossed mesh with a time step tied to h^2, and measures distances against
a reference trajectory of the same uncontrolled problem computed on a
refined discretization, so the reported gaps contract like the
discretization error.

All rows of a study solve the same continuous problem: every data field
is a fixed analytic formula. Under the homogeneous Dirichlet condition of
the distributed runs the density profiles are tapered to zero over a thin
boundary strip, so the data are admissible for the boundary condition and
the discretization error keeps its clean rate under refinement; the taper
is narrower than the coarse mesh spacing, so coarse rows see the plain
profiles. The rough Robin data use steep radial transitions of fixed
width, under-resolved on the coarsest mesh and resolved from n = 24 on,
which is what produces the large first-row distances of that study.

Three reference rules cover the studies. Distributed rows solve the
row's own space and grid with the other temporal degree ("companion"),
so the gap isolates the low-order temporal error at the row's own
resolution. The rough Robin study refines in both space and time
("space_time"), keeping the under-resolved initial layer visible in the
gap. The smooth Robin rows halve the step on the row's own space
("time"): the absorbing boundary drives a steep predator layer whose
spatial error then cancels exactly between row and reference, which is
what lets the linear and quadratic variants agree on fine meshes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fem import FeSpace
from .mesh import build_structured
from .state_solver import (
    Discretization,
    FieldTarget,
    ModelParams,
    ProblemData,
    SeparableForcing,
    solve_state,
)
from .timestepping import TimeGrid

__all__ = [
    "T_FINAL",
    "MESH_LADDER",
    "RAMP_WIDTH",
    "ROUGH_WIDTH",
    "Preset",
    "PRESETS",
    "StudyCase",
    "mesh_size",
    "num_steps",
    "smoothstep",
    "boundary_ramp",
    "smooth_initial",
    "rough_indicators",
    "rough_initial",
    "benchmark_forcing",
    "base_params",
    "build_data",
    "reference_target",
    "make_case",
    "table_functional",
]

T_FINAL = 0.1
MESH_LADDER = (6, 10, 24, 48)
RAMP_WIDTH = 1.0 / 6.0
ROUGH_WIDTH = 1.0 / 8.0


def smoothstep(s):
    """C^2 ramp: 0 below 0, 1 above 1, quintic 6s^5-15s^4+10s^3 between."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (s * (6.0 * s - 15.0) + 10.0)


def boundary_ramp(x1, x2, width: float | None = None):
    """Cutoff vanishing on the unit-square boundary, 1 beyond `width`."""
    if width is None:
        width = RAMP_WIDTH
    dist = np.minimum(np.minimum(x1, 1.0 - x1), np.minimum(x2, 1.0 - x2))
    return smoothstep(dist / width)


@dataclass(frozen=True)
class Preset:
    """One benchmark configuration of the study ladder."""

    name: str
    control_kind: str  # "distributed" or "robin"
    k: int  # temporal polynomial degree
    degree: int  # spatial polynomial degree
    tau_divisor: float  # time step law tau_hat = h^2 / tau_divisor
    data_kind: str  # "smooth" or "rough"
    bounds: tuple[float, float] | None = None
    forced: bool = False  # volume forcing on or off
    ref_rule: str = "space_time"  # "time" or "space_time" reference refinement

    @property
    def bc_kind(self) -> str:
        return "dirichlet" if self.control_kind == "distributed" else "free"


PRESETS: dict[str, Preset] = {
    "A": Preset("A", "distributed", 0, 1, 8.0, "smooth",
                bounds=(0.0, 0.1), forced=True, ref_rule="companion"),
    "B": Preset("B", "distributed", 1, 2, 8.0, "smooth", forced=True, ref_rule="companion"),
    "D": Preset("D", "robin", 0, 1, 2.0, "rough"),
    "E1": Preset("E1", "robin", 1, 1, 2.0, "smooth", ref_rule="time"),
    "E2": Preset("E2", "robin", 1, 2, 2.0, "smooth", ref_rule="time"),
}


def mesh_size(n: int) -> float:
    """Longest edge of the structured crossed mesh, sqrt(2)/n."""
    return math.sqrt(2.0) / n


def num_steps(n: int, tau_divisor: float, T: float = T_FINAL) -> int:
    """Step count N = ceil(T / tau_hat) for tau_hat = h^2 / tau_divisor.

    The small slack keeps exact multiples from rounding up one extra step.
    """
    tau_hat = mesh_size(n) ** 2 / tau_divisor
    return int(math.ceil(T / tau_hat - 1e-12))


def smooth_initial(tapered: bool = False):
    """Smooth initial densities (prey paraboloid, constant predators).

    tapered=True multiplies both by the boundary cutoff, which makes the
    pair admissible for the homogeneous Dirichlet condition of the
    distributed runs without touching values beyond the thin strip.
    """

    def y10(x1, x2):
        v = 16.0 + 0.25 * (x1 ** 2 + x2 ** 2)
        return v * boundary_ramp(x1, x2) if tapered else v

    def y20(x1, x2):
        v = 25.0 + 0.0 * np.asarray(x1, dtype=float)
        return v * boundary_ramp(x1, x2) if tapered else v

    return y10, y20


def rough_indicators():
    """Pointwise discontinuous initial densities: prey spike of value 10
    inside the radius-1/4 disc, predators 10 outside the radius-1/2 disc
    and 1 inside, both centered at (0.5, 0.5)."""

    def y10(x1, x2):
        r2 = (x1 - 0.5) ** 2 + (x2 - 0.5) ** 2
        return np.where(r2 <= 1.0 / 16.0, 10.0, 1.0)

    def y20(x1, x2):
        r2 = (x1 - 0.5) ** 2 + (x2 - 0.5) ** 2
        return np.where(r2 >= 0.25, 10.0, 1.0)

    return y10, y20


def rough_initial():
    """Rough initial densities as fixed steep radial profiles.

    The jumps of the indicator formulas are replaced by quintic ramps of
    width ROUGH_WIDTH centered at the jump radii. The profiles are the
    same analytic functions on every mesh, so all rows of a study solve
    one continuous problem; the coarsest mesh cannot resolve the ramps,
    the finer ones can.
    """

    def y10(x1, x2):
        r = np.sqrt((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2)
        # 10 inside radius 1/4, down to 1 across the ramp
        return 10.0 - 9.0 * smoothstep((r - 0.25) / ROUGH_WIDTH + 0.5)

    def y20(x1, x2):
        r = np.sqrt((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2)
        # 1 inside radius 1/2, up to 10 across the ramp
        return 1.0 + 9.0 * smoothstep((r - 0.5) / ROUGH_WIDTH + 0.5)

    return y10, y20


def benchmark_forcing(p: ModelParams) -> tuple[SeparableForcing, SeparableForcing]:
    """Volume forcing of the distributed benchmark runs.

    Built so that the smooth pair
        y1*(t,x) = (16 + 0.25 |x|^2) cos t,
        y2*(t,x) = 25 - sin t sin(pi x1) sin(pi x2)
    satisfies the uncontrolled interior equations exactly; the time and
    space factors stay separated so load vectors assemble once per space.
    Each space factor carries the boundary cutoff, so the source is
    admissible for the Dirichlet condition like the initial data.
    """

    def phi(x1, x2):
        return (16.0 + 0.25 * (x1 ** 2 + x2 ** 2)) * boundary_ramp(x1, x2)

    def sig(x1, x2):
        return np.sin(np.pi * x1) * np.sin(np.pi * x2) * boundary_ramp(x1, x2)

    def phisig(x1, x2):
        return (16.0 + 0.25 * (x1 ** 2 + x2 ** 2)) * sig(x1, x2)

    def one(x1, x2):
        return boundary_ramp(x1, x2)

    a, b, c, d = p.a, p.b, p.c, p.d
    f1 = SeparableForcing(
        [
            (lambda t: (25.0 * b - a) * math.cos(t) - math.sin(t), phi),
            (lambda t: -p.eps1 * math.cos(t), one),
            (lambda t: -b * math.sin(t) * math.cos(t), phisig),
        ]
    )
    f2 = SeparableForcing(
        [
            (lambda t: -math.cos(t) - (2.0 * math.pi ** 2 * p.eps2 + d) * math.sin(t), sig),
            (lambda t: -25.0 * c * math.cos(t), phi),
            (lambda t: c * math.sin(t) * math.cos(t), phisig),
            (lambda t: 25.0 * d, one),
        ]
    )
    return f1, f2


def base_params(preset: Preset) -> ModelParams:
    """Model parameters of a preset: shared kinetics, per-preset control."""
    lo, hi = preset.bounds if preset.bounds is not None else (None, None)
    return ModelParams(control_kind=preset.control_kind, g_lo=lo, g_hi=hi)


def build_data(preset: Preset, params: ModelParams, y1d=None, y2d=None, T: float = T_FINAL) -> ProblemData:
    """Problem data of a preset with the given targets.

    Targets default to the constant pair (0, 20) used by plain runs; study
    rows replace them with reference-trajectory targets.
    """
    if preset.data_kind == "smooth":
        y10, y20 = smooth_initial(tapered=preset.bc_kind == "dirichlet")
    else:
        y10, y20 = rough_initial()
    f1 = f2 = None
    if preset.forced:
        f1, f2 = benchmark_forcing(params)
    if y1d is None:
        y1d = lambda t, x1, x2: 0.0 * x1
    if y2d is None:
        y2d = lambda t, x1, x2: 20.0 + 0.0 * x1
    return ProblemData(y10=y10, y20=y20, y1d=y1d, y2d=y2d, T=T, f1=f1, f2=f2)


def reference_target(
    preset: Preset,
    n: int,
    params: ModelParams | None = None,
    T: float = T_FINAL,
    newton_tol: float = 1e-10,
) -> tuple[FieldTarget, FieldTarget]:
    """Reference trajectory targets for one study row.

    "companion" presets solve the row's own space and time grid with the
    other temporal degree, so the measured gap is the low-order temporal
    error at the row's resolution. "space_time" presets solve linear
    elements on the twice-refined mesh with twice the steps. "time"
    presets keep the row's space and only halve the step. Both species
    are wrapped for reuse as targets on the row's own space.
    """
    if params is None:
        params = base_params(preset)
    data = build_data(preset, params, T=T)
    N = num_steps(n, preset.tau_divisor, T)
    if preset.ref_rule == "companion":
        space = FeSpace(build_structured(n), preset.degree, preset.bc_kind)
        grid = TimeGrid.uniform(T, N)
        ref_k = 1 - preset.k
    elif preset.ref_rule == "time":
        space = FeSpace(build_structured(n), preset.degree, preset.bc_kind)
        grid = TimeGrid.uniform(T, 2 * N)
        ref_k = 0
    else:
        space = FeSpace(build_structured(2 * n), 1, preset.bc_kind)
        grid = TimeGrid.uniform(T, 2 * N)
        ref_k = 0
    ref = solve_state(params, data, space, grid, ref_k, controls=None, newton_tol=newton_tol)
    return FieldTarget(ref.y1), FieldTarget(ref.y2)


@dataclass
class StudyCase:
    """Everything needed to run one study row."""

    preset: Preset
    n: int
    params: ModelParams
    data: ProblemData
    space: FeSpace
    grid: TimeGrid
    k: int

    def discretization(self) -> Discretization:
        return Discretization(self.params, self.data, self.space, self.grid, self.k)


def make_case(
    name: str,
    n: int,
    params: ModelParams | None = None,
    T: float = T_FINAL,
    with_reference: bool = True,
) -> StudyCase:
    """Assemble one study row of a named preset.

    with_reference=True computes the refined reference trajectory and uses
    it as the target pair; False keeps the constant targets, skipping the
    reference solve.
    """
    preset = PRESETS[name.upper()]
    if params is None:
        params = base_params(preset)
    if params.control_kind != preset.control_kind:
        params = replace(params, control_kind=preset.control_kind)
    y1d = y2d = None
    if with_reference:
        y1d, y2d = reference_target(preset, n, params, T)
    data = build_data(preset, params, y1d=y1d, y2d=y2d, T=T)
    space = FeSpace(build_structured(n), preset.degree, preset.bc_kind)
    grid = TimeGrid.uniform(T, num_steps(n, preset.tau_divisor, T))
    return StudyCase(preset, n, params, data, space, grid, preset.k)


def table_functional(parts: dict) -> float:
    """Study-table functional: sum of both distances plus the control cost."""
    return parts["dist1"] + parts["dist2"] + parts["reg1"] + parts["reg2"]
