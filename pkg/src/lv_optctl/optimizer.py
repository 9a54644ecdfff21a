"""Projected nonlinear conjugate gradient loop for the reduced problem.

Fletcher-Reeves directions on the inactive set, strong Wolfe-Powell
acceptance, and a multiplicative step adaptation: shrink by half while the
sufficient-decrease test fails, grow by half steps while the curvature
test reports the step too short, and carry the accepted step (grown once)
into the next iteration. A bracketing line search is available behind a
config switch for comparison.

For box-constrained runs every trial point is projected, directions are
restarted whenever the active set changes, and after the decrease-based
stopping test fires a few rounds of the projection characterization
g := clamp(-mu/gamma) tighten the first-order identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lv_optctl.adjoint_solver import AdjointPair, adjoint_sweep
from lv_optctl.errors import LineSearchError
from lv_optctl.objective import (
    ControlPair,
    control_inner,
    evaluate_J,
    gradient,
    objective_parts,
    project,
)
from lv_optctl.state_solver import Discretization, StatePair

__all__ = ["NcgConfig", "OptRun", "optimize"]


@dataclass
class NcgConfig:
    tol: float = 1e-5
    max_iters: int = 200
    sigma: float = 0.1
    rho: float = 0.9
    step0: float = 1.0
    shrink: float = 0.5
    grow: float = 1.5
    max_line_trials: int = 40
    line_search: str = "adaptive"
    full_adjoint: bool = False
    newton_tol: float = 1e-10
    grad_atol: float = 1e-12
    polish_rounds: int = 2

    def __post_init__(self):
        if self.line_search not in ("adaptive", "bracket"):
            raise ValueError(f"unknown line search {self.line_search!r}")
        if not 0 < self.sigma < self.rho < 1:
            raise ValueError("need 0 < sigma < rho < 1")


@dataclass
class OptRun:
    controls: ControlPair
    state: StatePair
    adjoint: AdjointPair
    J: float
    parts: dict
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    message: str = ""
    n_state_solves: int = 0
    n_adjoint_solves: int = 0


class _Point:
    """State, adjoint, gradient and value at one control iterate."""

    __slots__ = ("g", "state", "adjoint", "grad", "J")

    def __init__(self, g, state, adjoint, grad, J):
        self.g = g
        self.state = state
        self.adjoint = adjoint
        self.grad = grad
        self.J = J


def _active_mask(g: ControlPair, grad: ControlPair) -> np.ndarray | None:
    """True at coefficients pinned at a bound with a gradient pushing out.

    Those components are frozen out of the search direction; the sign
    condition keeps coefficients that want to leave the bound free.
    """
    if g.lo is None and g.hi is None:
        return None
    gs = g.stack()
    rs = grad.stack()
    mask = np.zeros(gs.shape, dtype=bool)
    if g.lo is not None:
        mask |= (gs <= g.lo) & (rs > 0)
    if g.hi is not None:
        mask |= (gs >= g.hi) & (rs < 0)
    return mask


def _masked_residual(grad: ControlPair, mask) -> ControlPair:
    r = grad.copy()
    s = -r.stack()
    if mask is not None:
        s[mask] = 0.0
    return r.with_coeffs(s)


def optimize(disc: Discretization, config: NcgConfig | None = None, g0: ControlPair | None = None) -> OptRun:
    """Minimize the reduced functional over the (possibly boxed) controls."""
    cfg = config or NcgConfig()
    counters = {"state": 0, "adjoint": 0}

    def evaluate(g: ControlPair) -> _Point:
        state = disc.solve_state(g, newton_tol=cfg.newton_tol)
        counters["state"] += 1
        adj = adjoint_sweep(disc, state, full_coupling=cfg.full_adjoint)
        counters["adjoint"] += 1
        grad = gradient(disc, adj, g)
        return _Point(g, state, adj, grad, evaluate_J(disc, state, g))

    def step_to(base: ControlPair, d: np.ndarray, alpha: float) -> ControlPair:
        trial = base.with_coeffs(base.stack() + alpha * d)
        return project(trial)

    g = project(g0.copy()) if g0 is not None else project(ControlPair.zeros(disc))
    pt = evaluate(g)
    history: list[dict] = []
    bounded = g.lo is not None or g.hi is not None

    def record(it, point: _Point, rnorm, alpha, restarted, polish=False):
        gs = point.g.stack()
        history.append(
            {
                "iter": it,
                "J": point.J,
                "grad_norm": rnorm,
                "step": alpha,
                "restart": restarted,
                "polish": polish,
                "g_min": float(gs.min()),
                "g_max": float(gs.max()),
            }
        )

    converged = False
    message = "iteration limit reached"
    rr_prev = None
    d = None
    mask_prev = None
    alpha_carry = cfg.step0
    it = 0

    mask = _active_mask(pt.g, pt.grad)
    r = _masked_residual(pt.grad, mask)
    rr = control_inner(disc, r, r)
    record(0, pt, float(np.sqrt(max(rr, 0.0))), 0.0, False)

    while it < cfg.max_iters:
        it += 1
        rnorm = float(np.sqrt(max(rr, 0.0)))
        if rnorm <= cfg.grad_atol:
            converged = True
            message = "stationary point"
            break

        restarted = False
        if d is None or rr_prev is None:
            d = r.stack()
            restarted = True
        else:
            if mask_prev is not None or mask is not None:
                changed = (
                    (mask_prev is None) != (mask is None)
                    or (mask is not None and bool(np.any(mask_prev != mask)))
                )
            else:
                changed = False
            if changed:
                d = r.stack()
                restarted = True
            else:
                beta = rr / rr_prev
                d = r.stack() + beta * d
        # true slope of J along d; the Gram pairing of the full gradient
        dphi0 = control_inner(disc, pt.grad, pt.g.with_coeffs(d))
        # non-descent direction, fall back to steepest descent
        if dphi0 >= 0:
            d = r.stack()
            restarted = True
            dphi0 = control_inner(disc, pt.grad, pt.g.with_coeffs(d))
        if dphi0 >= -(cfg.grad_atol**2):
            converged = True
            message = "stationary point"
            break

        try:
            if cfg.line_search == "adaptive":
                alpha, new_pt = _adaptive_search(disc, cfg, pt, d, dphi0, alpha_carry, evaluate, step_to)
            else:
                alpha, new_pt = _bracket_search(disc, cfg, pt, d, dphi0, alpha_carry, evaluate, step_to)
        except LineSearchError as exc:
            message = f"line search failed after {exc.trials} trials"
            break
        alpha_carry = alpha * cfg.grow

        J_prev = pt.J
        pt = new_pt
        mask_prev = mask
        mask = _active_mask(pt.g, pt.grad)
        r = _masked_residual(pt.grad, mask)
        rr_prev, rr = rr, control_inner(disc, r, r)
        record(it, pt, float(np.sqrt(max(rr, 0.0))), alpha, restarted)

        denom = max(abs(pt.J), 1e-300)
        if abs(pt.J - J_prev) / denom <= cfg.tol:
            converged = True
            message = "relative decrease below tolerance"
            break

    if converged and bounded and cfg.polish_rounds > 0:
        from lv_optctl.objective import projected_from_multiplier

        for _ in range(cfg.polish_rounds):
            g_new = projected_from_multiplier(disc, pt.adjoint, pt.g.lo, pt.g.hi)
            g_new.lo, g_new.hi = pt.g.lo, pt.g.hi
            pt = evaluate(g_new)
        mask = _active_mask(pt.g, pt.grad)
        r = _masked_residual(pt.grad, mask)
        rr = control_inner(disc, r, r)
        record(it, pt, float(np.sqrt(max(rr, 0.0))), 0.0, False, polish=True)

    return OptRun(
        controls=pt.g,
        state=pt.state,
        adjoint=pt.adjoint,
        J=pt.J,
        parts=objective_parts(disc, pt.state, pt.g),
        history=history,
        iterations=it,
        converged=converged,
        message=message,
        n_state_solves=counters["state"],
        n_adjoint_solves=counters["adjoint"],
    )


def _directional(disc, point: _Point, d: np.ndarray) -> float:
    return control_inner(disc, point.grad, point.g.with_coeffs(d))


def _adaptive_search(disc, cfg, pt: _Point, d, dphi0, alpha0, evaluate, step_to):
    """Multiplicative strong Wolfe-Powell search.

    Halve while sufficient decrease fails; once it holds, grow while the
    directional derivative is still strongly negative (step too short),
    settling on the first trial meeting both conditions. Falls back to the
    best sufficient-decrease point when the trial budget runs out.
    """
    alpha = max(alpha0, 1e-16)
    best = None
    grown = False
    for trial in range(1, cfg.max_line_trials + 1):
        cand = evaluate(step_to(pt.g, d, alpha))
        if cand.J > pt.J + cfg.sigma * alpha * dphi0:
            if grown and best is not None:
                return best
            alpha *= cfg.shrink
            continue
        if best is None or cand.J < best[1].J:
            best = (alpha, cand)
        dphi = _directional(disc, cand, d)
        if abs(dphi) <= cfg.rho * abs(dphi0):
            return alpha, cand
        if dphi < 0:
            alpha *= cfg.grow
            grown = True
            continue
        # overshot the valley while satisfying decrease: shrink toward it
        alpha *= cfg.shrink
        grown = False
    if best is not None:
        return best
    raise LineSearchError(cfg.max_line_trials, 0.0)


def _bracket_search(disc, cfg, pt: _Point, d, dphi0, alpha0, evaluate, step_to):
    """Standard bracket-and-zoom strong Wolfe search on the projected path."""
    phi0 = pt.J

    def probe(alpha):
        cand = evaluate(step_to(pt.g, d, alpha))
        return cand, _directional(disc, cand, d)

    alpha_prev, phi_prev, cand_prev = 0.0, phi0, pt
    alpha = max(alpha0, 1e-16)
    trials = 0
    lo = hi = None
    while trials < cfg.max_line_trials:
        cand, dphi = probe(alpha)
        trials += 1
        if cand.J > phi0 + cfg.sigma * alpha * dphi0 or (trials > 1 and cand.J >= phi_prev):
            lo, hi = (alpha_prev, cand_prev), (alpha, cand)
            break
        if abs(dphi) <= cfg.rho * abs(dphi0):
            return alpha, cand
        if dphi >= 0:
            lo, hi = (alpha, cand), (alpha_prev, cand_prev)
            break
        alpha_prev, phi_prev, cand_prev = alpha, cand.J, cand
        alpha *= 2.0
    else:
        raise LineSearchError(trials, alpha_prev)

    best = None
    while trials < cfg.max_line_trials:
        amid = 0.5 * (lo[0] + hi[0])
        cand, dphi = probe(amid)
        trials += 1
        if cand.J > phi0 + cfg.sigma * amid * dphi0 or cand.J >= lo[1].J:
            hi = (amid, cand)
        else:
            if abs(dphi) <= cfg.rho * abs(dphi0):
                return amid, cand
            if dphi * (hi[0] - lo[0]) >= 0:
                hi = lo
            lo = (amid, cand)
            best = (amid, cand)
        if abs(hi[0] - lo[0]) < 1e-14:
            break
    if best is not None:
        return best
    if lo is not None and lo[0] > 0:
        return lo
    raise LineSearchError(trials, 0.0)
