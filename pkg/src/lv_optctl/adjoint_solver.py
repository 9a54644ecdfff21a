"""Backward adjoint sweep and forward linearized (tangent) sweep.

Both reuse the interval operators of the state discretization evaluated at
the computed state, so the adjoint is the transpose of the linearized
forward map. Two adjoint modes exist: the default keeps only the diagonal
reaction weightings (a - b y2) on mu1 and (c y1 - d) on mu2, the full mode
transposes the complete coupling Jacobian including the off-diagonal
b y1 and c y2 terms. The tangent sweep always carries the full coupling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from lv_optctl.state_solver import Discretization, ModelParams, ProblemData, StatePair
from lv_optctl.timestepping import SpaceTimeField, TimeGrid

__all__ = ["AdjointPair", "solve_adjoint", "solve_tangent"]


@dataclass
class AdjointPair:
    """Adjoint densities; the right limit at the final time is zero."""

    mu1: SpaceTimeField
    mu2: SpaceTimeField
    terminal_zero: bool = True
    full_coupling: bool = False


def _check_state(disc: Discretization, state: StatePair):
    if state.y1.space is not disc.space or state.y1.grid is not disc.grid:
        if state.y1.coeffs.shape != (disc.grid.num_steps, disc.nb, disc.space.ndof):
            raise ValueError("state was computed on a different discretization")


def adjoint_sweep(disc: Discretization, state: StatePair, full_coupling: bool = False) -> AdjointPair:
    """Solve the discrete adjoint systems backward in time.

    The source is the mismatch y - y_d integrated against the temporal test
    functions; information flows backward through the end-value coupling of
    consecutive intervals. Per-interval systems are the transposes of the
    linearized forward operators at the stored state.
    """
    _check_state(disc, state)
    nb, ndof = disc.nb, disc.space.ndof
    N = disc.grid.num_steps
    psi2 = disc.tables["q2_psi"]
    w2 = disc.tables["q2_w"]
    ej = disc.tables["e_prev"]
    t1 = disc.target_samples(1)
    t2 = disc.target_samples(2)

    mu1 = disc.state_field()
    mu2 = disc.state_field()
    inc1 = np.zeros(ndof)
    inc2 = np.zeros(ndof)
    for n in reversed(range(N)):
        tau = disc.grid.tau[n]
        rhs1 = np.zeros((nb, ndof))
        rhs2 = np.zeros((nb, ndof))
        for q in range(len(w2)):
            e1 = disc.M @ (psi2[q] @ state.y1.coeffs[n] - t1[n, q])
            e2 = disc.M @ (psi2[q] @ state.y2.coeffs[n] - t2[n, q])
            for alpha in range(nb):
                rhs1[alpha] += tau * w2[q] * psi2[q, alpha] * e1
                rhs2[alpha] += tau * w2[q] * psi2[q, alpha] * e2
        rhs1[nb - 1] += inc1
        rhs2[nb - 1] += inc2
        rhs = np.concatenate([rhs1.ravel(), rhs2.ravel()])
        rhs[disc._dir_mask] = 0.0
        A = disc.interval_jacobian(n, state.y1.coeffs[n], state.y2.coeffs[n], full_coupling=full_coupling)
        sol = spla.splu(A).solve(rhs, trans="T")
        mu1.coeffs[n] = sol[: nb * ndof].reshape(nb, ndof)
        mu2.coeffs[n] = sol[nb * ndof :].reshape(nb, ndof)
        inc1 = disc.M @ (ej @ mu1.coeffs[n])
        inc2 = disc.M @ (ej @ mu2.coeffs[n])
    return AdjointPair(mu1=mu1, mu2=mu2, full_coupling=full_coupling)


def tangent_sweep(disc: Discretization, state: StatePair, dv) -> StatePair:
    """Solve the linearized state equations for a control perturbation.

    Zero initial data, forced by the perturbation through the control
    coupling. Always uses the full linearization of the reaction terms.
    """
    _check_state(disc, state)
    nb, ndof = disc.nb, disc.space.ndof
    N = disc.grid.num_steps
    ej = disc.tables["e_prev"]
    dv1, dv2 = dv if not hasattr(dv, "g1") else (dv.g1, dv.g2)

    z1 = disc.state_field()
    z2 = disc.state_field()
    prev1 = np.zeros(ndof)
    prev2 = np.zeros(ndof)
    for n in range(N):
        ctrl = disc.control_terms(dv1, dv2, n)
        rhs1 = ctrl[0].copy()
        rhs2 = ctrl[1].copy()
        m1 = disc.M @ prev1
        m2 = disc.M @ prev2
        for alpha in range(nb):
            rhs1[alpha] += ej[alpha] * m1
            rhs2[alpha] += ej[alpha] * m2
        rhs = np.concatenate([rhs1.ravel(), rhs2.ravel()])
        rhs[disc._dir_mask] = 0.0
        A = disc.interval_jacobian(n, state.y1.coeffs[n], state.y2.coeffs[n], full_coupling=True)
        sol = spla.splu(A).solve(rhs)
        z1.coeffs[n] = sol[: nb * ndof].reshape(nb, ndof)
        z2.coeffs[n] = sol[nb * ndof :].reshape(nb, ndof)
        prev1 = z1.end_value(n)
        prev2 = z2.end_value(n)
    return StatePair(y1=z1, y2=z2, y10=np.zeros(ndof), y20=np.zeros(ndof))


def solve_adjoint(
    params: ModelParams,
    data: ProblemData,
    state: StatePair,
    space,
    grid: TimeGrid,
    k: int,
    full_adjoint: bool = False,
) -> AdjointPair:
    """Adjoint solve on a fresh discretization; see adjoint_sweep."""
    disc = Discretization(params, data, space, grid, k)
    return adjoint_sweep(disc, state, full_coupling=full_adjoint)


def solve_tangent(
    params: ModelParams,
    data: ProblemData,
    state: StatePair,
    dv,
    space,
    grid: TimeGrid,
    k: int,
) -> StatePair:
    """Tangent solve on a fresh discretization; see tangent_sweep."""
    disc = Discretization(params, data, space, grid, k)
    return tangent_sweep(disc, state, dv)
