"""Cost functional, reduced gradient, projection and optimality residuals.

All space-time norms use the same spatial mass matrices and temporal Gauss
rules as the solvers, so the adjoint-based gradient is exact for the
discrete functional up to linear solver tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lv_optctl.adjoint_solver import AdjointPair
from lv_optctl.state_solver import Discretization, StatePair
from lv_optctl.timestepping import SpaceTimeField

__all__ = [
    "ControlPair",
    "evaluate_J",
    "objective_parts",
    "gradient",
    "project",
    "vi_residual",
    "second_directional",
    "control_inner",
    "control_norm",
]


@dataclass
class ControlPair:
    """Two control fields with an optional shared coefficient box."""

    g1: SpaceTimeField
    g2: SpaceTimeField
    lo: float | None = None
    hi: float | None = None

    @classmethod
    def zeros(cls, disc: Discretization) -> "ControlPair":
        g1, g2 = disc.zero_controls()
        p = disc.params
        return cls(g1=g1, g2=g2, lo=p.g_lo, hi=p.g_hi)

    @classmethod
    def constant(cls, disc: Discretization, value: float) -> "ControlPair":
        g1, g2 = disc.constant_controls(value)
        p = disc.params
        return cls(g1=g1, g2=g2, lo=p.g_lo, hi=p.g_hi)

    def copy(self) -> "ControlPair":
        return ControlPair(g1=self.g1.copy(), g2=self.g2.copy(), lo=self.lo, hi=self.hi)

    def stack(self) -> np.ndarray:
        return np.stack([self.g1.coeffs, self.g2.coeffs])

    def with_coeffs(self, stacked: np.ndarray) -> "ControlPair":
        out = self.copy()
        out.g1.coeffs[...] = stacked[0]
        out.g2.coeffs[...] = stacked[1]
        return out

    def admissible(self, slack: float = 0.0) -> bool:
        s = self.stack()
        if self.lo is not None and s.min() < self.lo - slack:
            return False
        if self.hi is not None and s.max() > self.hi + slack:
            return False
        return True


def _control_mass(disc: Discretization):
    # FeSpace and BoundarySpace both expose their Gram matrix as .mass
    return disc.control_space.mass


def control_inner(disc: Discretization, u, v) -> float:
    """Space-time inner product on the control domain, both species summed.

    Temporal part is exact for the piecewise polynomial fields, spatial
    part uses the control-domain mass matrix.
    """
    Mc = _control_mass(disc)
    tm = disc.tables["tmass"]
    tau = disc.grid.tau
    u1, u2 = (u.g1, u.g2) if hasattr(u, "g1") else u
    v1, v2 = (v.g1, v.g2) if hasattr(v, "g1") else v
    total = 0.0
    for a, b in ((u1, v1), (u2, v2)):
        prod = np.einsum("naf,nbf->nab", a.coeffs, np.stack([(Mc @ b.coeffs[n].T).T for n in range(len(tau))]))
        total += float(np.einsum("n,ab,nab->", tau, tm, prod))
    return total


def control_norm(disc: Discretization, u) -> float:
    return float(np.sqrt(max(control_inner(disc, u, u), 0.0)))


def _species_inner(disc: Discretization, a: SpaceTimeField, b: SpaceTimeField) -> float:
    Mc = _control_mass(disc)
    tm = disc.tables["tmass"]
    tau = disc.grid.tau
    mb = np.stack([(Mc @ b.coeffs[n].T).T for n in range(len(tau))])
    return float(np.einsum("n,ab,naf,nbf->", tau, tm, a.coeffs, mb))


def state_mismatch(disc: Discretization, state: StatePair) -> tuple[float, float]:
    """Squared L2(L2) distances of each density to its target."""
    psi2 = disc.tables["q2_psi"]
    w2 = disc.tables["q2_w"]
    t1 = disc.target_samples(1)
    t2 = disc.target_samples(2)
    out = [0.0, 0.0]
    for i, (field, tgt) in enumerate(((state.y1, t1), (state.y2, t2))):
        acc = 0.0
        for n in range(disc.grid.num_steps):
            tau = disc.grid.tau[n]
            for q in range(len(w2)):
                e = psi2[q] @ field.coeffs[n] - tgt[n, q]
                acc += tau * w2[q] * float(e @ (disc.M @ e))
        out[i] = acc
    return out[0], out[1]


def objective_parts(disc: Discretization, state: StatePair, controls: ControlPair) -> dict:
    """Distances and penalties making up the functional.

    dist1/dist2 are the (unsquared) space-time distances to the targets,
    reg1/reg2 the control penalty terms including their gamma/2 factors.
    """
    d1_sq, d2_sq = state_mismatch(disc, state)
    p = disc.params
    r1 = 0.5 * p.gamma1 * _species_inner(disc, controls.g1, controls.g1)
    r2 = 0.5 * p.gamma2 * _species_inner(disc, controls.g2, controls.g2)
    return {
        "dist1": float(np.sqrt(max(d1_sq, 0.0))),
        "dist2": float(np.sqrt(max(d2_sq, 0.0))),
        "reg1": r1,
        "reg2": r2,
        "J": 0.5 * (d1_sq + d2_sq) + r1 + r2,
    }


def evaluate_J(disc: Discretization, state: StatePair, controls: ControlPair) -> float:
    """Value of the discrete cost functional."""
    return objective_parts(disc, state, controls)["J"]


def gradient(disc: Discretization, adjoint: AdjointPair, controls: ControlPair) -> ControlPair:
    """Reduced gradient as a control-space field.

    Distributed control: gamma_i g_i + mu_i. Robin control: gamma_i g_i
    plus lambda_i times the boundary trace of mu_i. The multiplier
    coefficients transfer directly because state and control fields share
    the temporal basis.
    """
    p = disc.params
    out = ControlPair(g1=controls.g1.copy(), g2=controls.g2.copy(), lo=None, hi=None)
    robin = p.control_kind == "robin"
    for g_out, g_in, mu, gam, lam in (
        (out.g1, controls.g1, adjoint.mu1, p.gamma1, p.lambda1),
        (out.g2, controls.g2, adjoint.mu2, p.gamma2, p.lambda2),
    ):
        if robin:
            tr = mu.coeffs[:, :, disc.control_space.trace_dofs]
            g_out.coeffs[...] = gam * g_in.coeffs + lam * tr
        else:
            g_out.coeffs[...] = gam * g_in.coeffs + mu.coeffs
    return out


def project(controls: ControlPair) -> ControlPair:
    """Clamp every coefficient into the control box; identity if unbounded."""
    out = controls.copy()
    if controls.lo is None and controls.hi is None:
        return out
    for f in (out.g1, out.g2):
        np.clip(f.coeffs, controls.lo, controls.hi, out=f.coeffs)
    return out


def projected_from_multiplier(disc: Discretization, adjoint: AdjointPair, lo, hi) -> ControlPair:
    """The projection characterization clamp(-mu/gamma) as a ControlPair."""
    zero = ControlPair.zeros(disc)
    zero.lo, zero.hi = lo, hi
    grad = gradient(disc, adjoint, zero)
    cand = ControlPair(
        g1=grad.g1.copy(),
        g2=grad.g2.copy(),
        lo=lo,
        hi=hi,
    )
    cand.g1.coeffs[...] = -cand.g1.coeffs / disc.params.gamma1
    cand.g2.coeffs[...] = -cand.g2.coeffs / disc.params.gamma2
    return project(cand)


def vi_residual(disc: Discretization, controls: ControlPair, adjoint: AdjointPair) -> float:
    """Worst violation of the first-order variational inequality.

    The inequality integral (gamma g + mu, u - g) must be nonnegative for
    every admissible u; returns the largest negative part over a probe set
    of admissible controls: both bound constants, the box midpoint and 8
    random admissible fields with a fixed seed.
    """
    if controls.lo is None or controls.hi is None:
        raise ValueError("the variational inequality requires a bounded control box")
    lo, hi = controls.lo, controls.hi
    grad = gradient(disc, adjoint, controls)
    probes: list[ControlPair] = [
        ControlPair.constant(disc, lo),
        ControlPair.constant(disc, hi),
        ControlPair.constant(disc, 0.5 * (lo + hi)),
    ]
    rng = np.random.default_rng(7919)
    for _ in range(8):
        cand = ControlPair.zeros(disc)
        cand.g1.coeffs[...] = rng.uniform(lo, hi, size=cand.g1.coeffs.shape)
        cand.g2.coeffs[...] = rng.uniform(lo, hi, size=cand.g2.coeffs.shape)
        probes.append(cand)
    worst = 0.0
    for u in probes:
        for which in ("g1", "g2"):
            du = SpaceTimeField(
                space=getattr(controls, which).space,
                grid=disc.grid,
                k=disc.k,
                coeffs=getattr(u, which).coeffs - getattr(controls, which).coeffs,
            )
            gfield = getattr(grad, which)
            val = _species_inner(disc, gfield, du)
            worst = max(worst, -val)
    return worst


def second_directional(disc: Discretization, tangent: StatePair, v: ControlPair) -> float:
    """Second-order directional value of the functional.

    Sum of the squared space-time norms of the linearized states plus the
    weighted squared norms of the direction.
    """
    psi2 = disc.tables["q2_psi"]
    w2 = disc.tables["q2_w"]
    acc = 0.0
    for field in (tangent.y1, tangent.y2):
        for n in range(disc.grid.num_steps):
            tau = disc.grid.tau[n]
            for q in range(len(w2)):
                z = psi2[q] @ field.coeffs[n]
                acc += tau * w2[q] * float(z @ (disc.M @ z))
    p = disc.params
    acc += p.gamma1 * _species_inner(disc, v.g1, v.g1)
    acc += p.gamma2 * _species_inner(disc, v.g2, v.g2)
    return acc
