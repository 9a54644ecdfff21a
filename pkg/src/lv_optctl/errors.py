"""Error types raised by the solvers."""

from __future__ import annotations


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class SparseSolveError(SolverError):
    """Direct sparse solve produced an unacceptable residual.

    Carries the relative residual and a cheap conditioning diagnostic so the
    caller can tell singularity from mere ill-conditioning.
    """

    def __init__(self, message: str, relative_residual: float, diagnostic: str = ""):
        super().__init__(message)
        self.relative_residual = relative_residual
        self.diagnostic = diagnostic


class NewtonError(SolverError):
    """Newton iteration on one time interval failed to converge."""

    def __init__(self, interval: int, residual: float, iterations: int):
        super().__init__(
            f"Newton failed on interval {interval}: residual {residual:.3e} "
            f"after {iterations} iterations"
        )
        self.interval = interval
        self.residual = residual
        self.iterations = iterations


class BlowUpError(SolverError):
    """State left the trust region (max norm guard) during time stepping."""

    def __init__(self, interval: int, norm: float):
        super().__init__(f"solution blow-up on interval {interval}: max norm {norm:.3e}")
        self.interval = interval
        self.norm = norm


class LineSearchError(SolverError):
    """No admissible step found within the trial budget."""

    def __init__(self, trials: int, best_alpha: float | None = None):
        super().__init__(f"line search failed after {trials} trials")
        self.trials = trials
        self.best_alpha = best_alpha


class RootFindError(SolverError):
    """Fixed point search did not converge."""
