"""Nonlinear state solves for the controlled reaction-diffusion system.

The model couples two densities on the unit square:

    y1_t = eps1 lap(y1) + (a - b y2) y1 + controls/forcing
    y2_t = eps2 lap(y2) + (c y1 - d) y2 + controls/forcing

With distributed control the control enters the volume term and the state
satisfies homogeneous Dirichlet conditions. With Robin control the state
space is unconstrained and the control acts through the boundary term
lambda_i <g_i, v> on the perimeter.

Each time interval is solved monolithically for both species with a Newton
iteration using the analytic Jacobian of the reaction coupling. The same
interval operators, transposed, drive the adjoint and tangent solvers, so
discrete gradients are exact up to solver tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from lv_optctl.errors import BlowUpError, NewtonError
from lv_optctl.fem import BoundarySpace, FeSpace, assemble_load, interpolate, solve_sparse
from lv_optctl.timestepping import SpaceTimeField, TimeGrid, temporal_tables

__all__ = [
    "ModelParams",
    "ProblemData",
    "StatePair",
    "SeparableForcing",
    "FieldTarget",
    "Discretization",
    "solve_state",
]

_BLOWUP_LIMIT = 1.0e6


@dataclass(frozen=True)
class ModelParams:
    """Model and regularization parameters.

    g_lo / g_hi are the pointwise control bounds; None means unconstrained
    on that side. control_kind selects where the control acts.
    """

    a: float = 0.47
    b: float = 0.024
    c: float = 0.023
    d: float = 0.76
    eps1: float = 0.1
    eps2: float = 0.01
    lambda1: float = 1.0
    lambda2: float = 1.0
    gamma1: float = 0.01
    gamma2: float = 0.01
    g_lo: float | None = None
    g_hi: float | None = None
    control_kind: str = "distributed"

    def __post_init__(self):
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("diffusion coefficients must be positive")
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("control penalties must be positive")
        if self.control_kind not in ("distributed", "robin"):
            raise ValueError(f"unknown control kind {self.control_kind!r}")
        if self.g_lo is not None and self.g_hi is not None and self.g_lo >= self.g_hi:
            raise ValueError("empty control box: g_lo >= g_hi")

    @property
    def bounds(self) -> tuple[float | None, float | None]:
        return (self.g_lo, self.g_hi)


class SeparableForcing:
    """Forcing given as a sum of time factor times space factor terms.

    Spatial load vectors are assembled once per space and combined with the
    time coefficients on demand, which keeps load evaluation cheap inside
    the time loop.
    """

    def __init__(self, terms: list[tuple[Callable[[float], float], Callable]]):
        self.terms = list(terms)
        self._loads: dict[int, list[np.ndarray]] = {}

    def load(self, space: FeSpace, t: float) -> np.ndarray:
        key = id(space)
        if key not in self._loads:
            self._loads[key] = [assemble_load(space, sf) for _, sf in self.terms]
        out = np.zeros(space.ndof)
        for (tf, _), vec in zip(self.terms, self._loads[key]):
            out += float(tf(t)) * vec
        return out

    def __call__(self, t, x1, x2):
        vals = 0.0
        for tf, sf in self.terms:
            vals = vals + float(tf(t)) * sf(x1, x2)
        return vals


class FieldTarget:
    """Target given by a space-time field from another discretization.

    Evaluation at the dofs of a client space goes through a cached sparse
    evaluation matrix, so repeated sampling inside objective and adjoint
    loops stays cheap.
    """

    def __init__(self, field_ref: SpaceTimeField):
        self.field = field_ref
        self._eval_mats: dict[int, sp.csr_matrix] = {}

    def _matrix(self, space: FeSpace) -> sp.csr_matrix:
        key = id(space)
        if key not in self._eval_mats:
            from lv_optctl.fem import evaluation_matrix

            self._eval_mats[key] = evaluation_matrix(self.field.space, space.dof_coords)
        return self._eval_mats[key]

    def nodal(self, space: FeSpace, t: float) -> np.ndarray:
        t = min(max(t, np.nextafter(0.0, 1.0)), self.field.grid.horizon)
        return self._matrix(space) @ self.field.eval(t)


def _target_nodal(target, space: FeSpace, t: float) -> np.ndarray:
    if hasattr(target, "nodal"):
        return target.nodal(space, t)
    x = space.dof_coords
    vals = target(t, x[:, 0], x[:, 1])
    return np.asarray(np.broadcast_to(vals, (space.ndof,)), dtype=float)


def _forcing_load(f, space: FeSpace, t: float) -> np.ndarray | None:
    if f is None:
        return None
    if isinstance(f, SeparableForcing):
        return f.load(space, t)
    q = space.qpoints
    return assemble_load(space, np.broadcast_to(f(t, q[:, :, 0], q[:, :, 1]), space.dvol.shape))


@dataclass
class ProblemData:
    """Data of one optimal control run.

    y10 / y20 are initial densities as nodal vectors or callables of
    (x1, x2). Targets y1d / y2d are callables of (t, x1, x2) or objects
    with a nodal(space, t) method such as FieldTarget. f1 / f2 are volume
    forcing terms, None, callable (t, x1, x2), or SeparableForcing.
    project_initial selects the L2 projection instead of nodal
    interpolation for callable initial data; discontinuous densities keep
    their element averages that way.
    """

    y10: object
    y20: object
    y1d: object
    y2d: object
    T: float
    f1: object = None
    f2: object = None
    project_initial: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("time horizon must be positive")


@dataclass
class StatePair:
    """Solution densities with solver diagnostics."""

    y1: SpaceTimeField
    y2: SpaceTimeField
    y10: np.ndarray
    y20: np.ndarray
    newton_iters: np.ndarray = field(default=None)

    @property
    def max_newton_iters(self) -> int:
        return int(self.newton_iters.max()) if self.newton_iters is not None else 0


def _unpack_controls(controls):
    if controls is None:
        return None, None
    if hasattr(controls, "g1"):
        return controls.g1, controls.g2
    g1, g2 = controls
    return g1, g2


class Discretization:
    """Assembled operators of one space-time discretization.

    Shared by the state, tangent and adjoint solvers and by the objective,
    guaranteeing that all of them integrate with identical quadratures.
    """

    def __init__(self, params: ModelParams, data: ProblemData, space: FeSpace, grid: TimeGrid, k: int):
        if abs(grid.horizon - data.T) > 1e-12 * max(1.0, data.T):
            raise ValueError("time grid horizon does not match the problem horizon")
        if params.control_kind == "distributed" and space.bc_kind != "dirichlet":
            raise ValueError("distributed control requires a Dirichlet state space")
        if params.control_kind == "robin" and space.bc_kind != "free":
            raise ValueError("Robin control requires an unconstrained state space")
        self.params = params
        self.data = data
        self.space = space
        self.grid = grid
        self.k = int(k)
        self.tables = temporal_tables(self.k)
        self.nb = self.k + 1

        self.M = space.mass
        self.K = space.stiffness
        if params.control_kind == "robin":
            self.B = space.boundary_mass
            self.control_space = BoundarySpace(space)
        else:
            self.B = None
            self.control_space = space
        # constant spatial operator per species: diffusion plus boundary term
        self.C1 = params.eps1 * self.K + (params.lambda1 * self.B if self.B is not None else 0.0 * self.K)
        self.C2 = params.eps2 * self.K + (params.lambda2 * self.B if self.B is not None else 0.0 * self.K)

        self.y10 = self._initial_vector(data.y10)
        self.y20 = self._initial_vector(data.y20)

        ndof = space.ndof
        stacked = 2 * self.nb * ndof
        self._stacked_size = stacked
        # order: species 1 blocks 0..k, species 2 blocks 0..k
        dir_mask = np.zeros(stacked, dtype=bool)
        for blk in range(2 * self.nb):
            dir_mask[blk * ndof + space.dirichlet_dofs] = True
        self._dir_mask = dir_mask
        keep = (~dir_mask).astype(float)
        self._keep_diag = sp.diags(keep).tocsr()
        self._dir_diag = sp.diags(dir_mask.astype(float)).tocsr()

        self._load_cache: dict[int, np.ndarray] | None = None
        self._target_cache: dict[str, np.ndarray] = {}

    # -- small helpers -----------------------------------------------------

    def _initial_vector(self, y0) -> np.ndarray:
        if callable(y0):
            if self.data.project_initial:
                return solve_sparse(self.space.mass, assemble_load(self.space, y0))
            return interpolate(self.space, y0)
        arr = np.asarray(y0, dtype=float)
        if arr.shape != (self.space.ndof,):
            raise ValueError(f"initial data has shape {arr.shape}, expected ({self.space.ndof},)")
        return arr.copy()

    def zero_controls(self) -> tuple[SpaceTimeField, SpaceTimeField]:
        cs = self.control_space
        return (
            SpaceTimeField.zeros(cs, self.grid, self.k),
            SpaceTimeField.zeros(cs, self.grid, self.k),
        )

    def constant_controls(self, value: float) -> tuple[SpaceTimeField, SpaceTimeField]:
        cs = self.control_space
        return (
            SpaceTimeField.constant(cs, self.grid, self.k, value),
            SpaceTimeField.constant(cs, self.grid, self.k, value),
        )

    def state_field(self) -> SpaceTimeField:
        return SpaceTimeField.zeros(self.space, self.grid, self.k)

    def quad_times(self, n: int) -> np.ndarray:
        return self.grid.knots[n] + self.grid.tau[n] * self.tables["q2_s"]

    def target_samples(self, which: int) -> np.ndarray:
        """Nodal target samples at the two point Gauss times, (N, 2, ndof)."""
        key = f"target{which}"
        if key not in self._target_cache:
            tgt = self.data.y1d if which == 1 else self.data.y2d
            out = np.empty((self.grid.num_steps, len(self.tables["q2_s"]), self.space.ndof))
            for n in range(self.grid.num_steps):
                for q, t in enumerate(self.quad_times(n)):
                    out[n, q] = _target_nodal(tgt, self.space, float(t))
            self._target_cache[key] = out
        return self._target_cache[key]

    def forcing_terms(self) -> np.ndarray:
        """Assembled forcing contributions per interval and test index.

        Shape (N, 2, nb, ndof); integral of (f_i, phi) psi_alpha over each
        interval by two point Gauss. Cached, forcing does not change across
        optimizer iterations.
        """
        if self._load_cache is None:
            N = self.grid.num_steps
            ndof = self.space.ndof
            psi2 = self.tables["q2_psi"]
            w2 = self.tables["q2_w"]
            out = np.zeros((N, 2, self.nb, ndof))
            for n in range(N):
                tau = self.grid.tau[n]
                for q, t in enumerate(self.quad_times(n)):
                    for i, f in enumerate((self.data.f1, self.data.f2)):
                        vec = _forcing_load(f, self.space, float(t))
                        if vec is None:
                            continue
                        for alpha in range(self.nb):
                            out[n, i, alpha] += tau * w2[q] * psi2[q, alpha] * vec
            self._load_cache = out
        return self._load_cache

    def control_terms(self, g1: SpaceTimeField | None, g2: SpaceTimeField | None, n: int) -> np.ndarray:
        """Control contribution to the interval rhs, shape (2, nb, ndof)."""
        out = np.zeros((2, self.nb, self.space.ndof))
        if g1 is None:
            return out
        tau = self.grid.tau[n]
        tm = self.tables["tmass"]
        kind = self.params.control_kind
        for i, (g, lam) in enumerate(((g1, self.params.lambda1), (g2, self.params.lambda2))):
            for beta in range(self.nb):
                if kind == "distributed":
                    vec = self.M @ g.coeffs[n, beta]
                else:
                    vec = lam * (self.B @ self.control_space.lift(g.coeffs[n, beta]))
                for alpha in range(self.nb):
                    out[i, alpha] += tau * tm[alpha, beta] * vec
        return out

    # -- interval operators ------------------------------------------------

    def _reaction_quad_values(self, coeffs1: np.ndarray, coeffs2: np.ndarray):
        """State values at reaction quadrature points.

        Returns (nodal1, nodal2, quad1, quad2): nodal values per temporal
        point (nq, ndof) and element-quadrature values (nq, nt, nqs).
        """
        P = self.tables["qr_psi"]  # (nq, nb)
        nodal1 = P @ coeffs1.reshape(self.nb, -1)
        nodal2 = P @ coeffs2.reshape(self.nb, -1)
        ed = self.space.element_dofs
        phiT = self.space.phi.T
        quad1 = np.stack([nodal1[q][ed] @ phiT for q in range(P.shape[0])])
        quad2 = np.stack([nodal2[q][ed] @ phiT for q in range(P.shape[0])])
        return nodal1, nodal2, quad1, quad2

    def _load_from_quad(self, values: np.ndarray) -> np.ndarray:
        contrib = np.einsum("tq,qi->ti", self.space.dvol * values, self.space.phi)
        out = np.zeros(self.space.ndof)
        np.add.at(out, self.space.element_dofs.ravel(), contrib.ravel())
        return out

    def _weighted_mass_from_quad(self, values: np.ndarray) -> sp.csr_matrix:
        local = np.einsum("tq,qi,qj->tij", self.space.dvol * values, self.space.phi, self.space.phi)
        return self.space._scatter(local)

    def interval_residual(self, n: int, U: np.ndarray, prev1: np.ndarray, prev2: np.ndarray, rhs_fixed: np.ndarray) -> np.ndarray:
        """Stacked residual of interval n at coefficients U.

        rhs_fixed holds forcing plus control contributions, shape
        (2, nb, ndof). Dirichlet rows are replaced by the dof values.
        """
        nb, ndof = self.nb, self.space.ndof
        p = self.params
        tau = self.grid.tau[n]
        JT = self.tables["jump"]
        tm = self.tables["tmass"]
        ej = self.tables["e_prev"]
        qr_w = self.tables["qr_w"]
        P = self.tables["qr_psi"]

        c1 = U[: nb * ndof].reshape(nb, ndof)
        c2 = U[nb * ndof :].reshape(nb, ndof)
        nod1, nod2, q1, q2v = self._reaction_quad_values(c1, c2)

        r1 = np.zeros((nb, ndof))
        r2 = np.zeros((nb, ndof))
        for beta in range(nb):
            m1 = self.M @ c1[beta]
            m2 = self.M @ c2[beta]
            s1 = self.C1 @ c1[beta]
            s2 = self.C2 @ c2[beta]
            for alpha in range(nb):
                r1[alpha] += JT[alpha, beta] * m1 + tau * tm[alpha, beta] * s1
                r2[alpha] += JT[alpha, beta] * m2 + tau * tm[alpha, beta] * s2
        mp1 = self.M @ prev1
        mp2 = self.M @ prev2
        for alpha in range(nb):
            r1[alpha] -= ej[alpha] * mp1
            r2[alpha] -= ej[alpha] * mp2
        # reaction terms, assembled from quadrature values of the products
        for q in range(P.shape[0]):
            w = tau * qr_w[q]
            react1 = self._load_from_quad((p.a - p.b * q2v[q]) * q1[q])
            react2 = self._load_from_quad((p.c * q1[q] - p.d) * q2v[q])
            for alpha in range(nb):
                r1[alpha] -= w * P[q, alpha] * react1
                r2[alpha] -= w * P[q, alpha] * react2
        r1 -= rhs_fixed[0]
        r2 -= rhs_fixed[1]

        out = np.concatenate([r1.ravel(), r2.ravel()])
        out[self._dir_mask] = U[self._dir_mask]
        return out

    def interval_jacobian(self, n: int, coeffs1: np.ndarray, coeffs2: np.ndarray, full_coupling: bool = True) -> sp.csc_matrix:
        """Stacked Jacobian of interval n at the given state coefficients.

        With full_coupling the cross derivatives of the reaction terms are
        included; without, only the diagonal reaction weights remain, which
        is the simplified operator used by the default adjoint mode.
        Dirichlet rows and columns are eliminated with a unit diagonal.
        """
        nb, ndof = self.nb, self.space.ndof
        p = self.params
        tau = self.grid.tau[n]
        JT = self.tables["jump"]
        tm = self.tables["tmass"]
        qr_w = self.tables["qr_w"]
        P = self.tables["qr_psi"]

        _, _, q1, q2v = self._reaction_quad_values(coeffs1, coeffs2)
        R1 = [self._weighted_mass_from_quad(q1[q]) for q in range(P.shape[0])]
        R2 = [self._weighted_mass_from_quad(q2v[q]) for q in range(P.shape[0])]

        blocks = [[None] * (2 * nb) for _ in range(2 * nb)]
        for alpha in range(nb):
            for beta in range(nb):
                wsum = tau * np.dot(qr_w, P[:, alpha] * P[:, beta])
                react11 = -wsum * p.a * self.M
                react22 = wsum * p.d * self.M
                cross12 = None
                cross21 = None
                for q in range(P.shape[0]):
                    w = tau * qr_w[q] * P[q, alpha] * P[q, beta]
                    react11 = react11 + w * p.b * R2[q]
                    react22 = react22 - w * p.c * R1[q]
                    if full_coupling:
                        c12 = w * p.b * R1[q]
                        c21 = -w * p.c * R2[q]
                        cross12 = c12 if cross12 is None else cross12 + c12
                        cross21 = c21 if cross21 is None else cross21 + c21
                core = JT[alpha, beta] * self.M
                blocks[alpha][beta] = core + tau * tm[alpha, beta] * self.C1 + react11
                blocks[nb + alpha][nb + beta] = core + tau * tm[alpha, beta] * self.C2 + react22
                if full_coupling:
                    blocks[alpha][nb + beta] = cross12
                    blocks[nb + alpha][beta] = cross21
        A = sp.bmat(blocks, format="csr")
        if len(self.space.dirichlet_dofs):
            A = self._keep_diag @ A @ self._keep_diag + self._dir_diag
        return A.tocsc()

    # -- state solve -------------------------------------------------------

    def solve_state(self, controls=None, newton_tol: float = 1e-10, max_newton: int = 25) -> StatePair:
        g1, g2 = _unpack_controls(controls)
        nb, ndof = self.nb, self.space.ndof
        N = self.grid.num_steps
        y1 = self.state_field()
        y2 = self.state_field()
        iters = np.zeros(N, dtype=np.int64)
        forcing = self.forcing_terms()

        prev1, prev2 = self.y10, self.y20
        for n in range(N):
            rhs_fixed = forcing[n] + self.control_terms(g1, g2, n)
            U = np.concatenate([np.tile(prev1, nb), np.tile(prev2, nb)])
            U[self._dir_mask] = 0.0
            res = self.interval_residual(n, U, prev1, prev2, rhs_fixed)
            rnorm = np.linalg.norm(res)
            it = 0
            while rnorm > newton_tol:
                if it >= max_newton:
                    raise NewtonError(n, float(rnorm), it)
                A = self.interval_jacobian(n, U[: nb * ndof].reshape(nb, ndof), U[nb * ndof :].reshape(nb, ndof))
                dU = spla.splu(A).solve(-res)
                # half-step damping on the stacked residual norm
                step = 1.0
                for _ in range(9):
                    U_try = U + step * dU
                    res_try = self.interval_residual(n, U_try, prev1, prev2, rhs_fixed)
                    rnorm_try = np.linalg.norm(res_try)
                    if rnorm_try < rnorm or rnorm_try <= newton_tol:
                        break
                    step *= 0.5
                U, res, rnorm = U_try, res_try, rnorm_try
                it += 1
            iters[n] = it
            y1.coeffs[n] = U[: nb * ndof].reshape(nb, ndof)
            y2.coeffs[n] = U[nb * ndof :].reshape(nb, ndof)
            prev1 = y1.end_value(n)
            prev2 = y2.end_value(n)
            worst = max(np.abs(prev1).max(), np.abs(prev2).max())
            if not np.isfinite(worst) or worst > _BLOWUP_LIMIT:
                raise BlowUpError(n, float(worst))

        return StatePair(y1=y1, y2=y2, y10=self.y10, y20=self.y20, newton_iters=iters)


def solve_state(
    params: ModelParams,
    data: ProblemData,
    space: FeSpace,
    grid: TimeGrid,
    k: int,
    controls=None,
    newton_tol: float = 1e-10,
    max_newton: int = 25,
) -> StatePair:
    """Solve the coupled state system on the given discretization.

    Convenience wrapper building a fresh Discretization; loops that reuse
    operators (optimization, studies) should hold a Discretization and call
    its solve_state method instead.
    """
    disc = Discretization(params, data, space, grid, k)
    return disc.solve_state(controls, newton_tol=newton_tol, max_newton=max_newton)
