"""Optimal control of a two species reaction-diffusion system.

Finite element solver, adjoint machinery and projected nonlinear CG for
distributed and Robin boundary stocking controls of a diffusive predator
prey model on the unit square, plus the kinetic phase-plane tools.
"""

from .errors import (
    BlowUpError,
    LineSearchError,
    NewtonError,
    RootFindError,
    SolverError,
    SparseSolveError,
)
from .mesh import Triangulation, boundary_trace_map, build_structured, export_mesh, mesh_edges
from .fem import (
    BoundarySpace,
    FeSpace,
    assemble_load,
    evaluate_field,
    evaluation_matrix,
    interpolate,
    solve_sparse,
)
from .timestepping import SpaceTimeField, TimeGrid, temporal_tables, time_quadrature
from .state_solver import (
    Discretization,
    FieldTarget,
    ModelParams,
    ProblemData,
    SeparableForcing,
    StatePair,
    solve_state,
)
from .adjoint_solver import AdjointPair, adjoint_sweep, solve_adjoint, solve_tangent, tangent_sweep
from .objective import (
    ControlPair,
    control_inner,
    control_norm,
    evaluate_J,
    gradient,
    objective_parts,
    project,
    projected_from_multiplier,
    second_directional,
    vi_residual,
)
from .optimizer import NcgConfig, OptRun, optimize
from .dynamics import (
    FixedPointReport,
    classify,
    first_integral,
    fixed_points,
    kinetics_jacobian,
    simulate_kinetics,
)
from . import presets

__version__ = "0.1.0"

__all__ = [
    "AdjointPair",
    "BlowUpError",
    "BoundarySpace",
    "ControlPair",
    "Discretization",
    "FeSpace",
    "FieldTarget",
    "FixedPointReport",
    "LineSearchError",
    "ModelParams",
    "NcgConfig",
    "NewtonError",
    "OptRun",
    "ProblemData",
    "RootFindError",
    "SeparableForcing",
    "SolverError",
    "SpaceTimeField",
    "SparseSolveError",
    "StatePair",
    "TimeGrid",
    "Triangulation",
    "adjoint_sweep",
    "assemble_load",
    "boundary_trace_map",
    "build_structured",
    "classify",
    "control_inner",
    "control_norm",
    "evaluate_J",
    "evaluate_field",
    "evaluation_matrix",
    "export_mesh",
    "first_integral",
    "fixed_points",
    "gradient",
    "interpolate",
    "kinetics_jacobian",
    "mesh_edges",
    "objective_parts",
    "optimize",
    "presets",
    "project",
    "projected_from_multiplier",
    "second_directional",
    "simulate_kinetics",
    "solve_adjoint",
    "solve_sparse",
    "solve_state",
    "solve_tangent",
    "tangent_sweep",
    "temporal_tables",
    "time_quadrature",
    "vi_residual",
    "__version__",
]
