"""Time grids and discontinuous-in-time coefficient fields.

Fields are piecewise polynomials of degree k in time (k = 0 or 1) with
finite element coefficient vectors, left-continuous at the grid knots.
Degree 1 uses the nodal basis at the interval endpoints, so clamping the
coefficients clamps the function. Interval integrals use two point Gauss,
exact through cubics; nonlinear products on degree 1 intervals use the
three point rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TimeGrid", "SpaceTimeField", "time_quadrature", "temporal_tables"]

_INV_SQRT3 = 1.0 / np.sqrt(3.0)
GAUSS2_S = np.array([0.5 * (1.0 - _INV_SQRT3), 0.5 * (1.0 + _INV_SQRT3)])
GAUSS2_W = np.array([0.5, 0.5])

_G3 = 0.5 * np.sqrt(3.0 / 5.0)
GAUSS3_S = np.array([0.5 - _G3, 0.5, 0.5 + _G3])
GAUSS3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def _poly_basis(k: int, s: np.ndarray) -> np.ndarray:
    """Values of the temporal basis at local coordinates s in [0, 1].

    Shape (len(s), k + 1). Degree 0: the constant 1. Degree 1: endpoint
    nodal functions 1 - s and s.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if k == 0:
        return np.ones((len(s), 1))
    if k == 1:
        return np.stack([1.0 - s, s], axis=1)
    raise ValueError(f"temporal degree must be 0 or 1, got {k}")


def temporal_tables(k: int) -> dict:
    """Quadrature and coupling tables for one interval of degree k.

    Keys:
      q2_s, q2_w, q2_psi : two point Gauss nodes, weights, basis values
      qr_s, qr_w, qr_psi : rule for nonlinear (reaction) products
      tmass              : unit-interval basis mass matrix, scale by tau
      jump               : time derivative plus jump coupling on the mass
      e_prev             : weight of the previous end value per test index
    """
    if k == 0:
        qr_s, qr_w = np.array([0.5]), np.array([1.0])
        jump = np.array([[1.0]])
        e_prev = np.array([1.0])
    elif k == 1:
        qr_s, qr_w = GAUSS3_S, GAUSS3_W
        # rows test the left/right temporal test function:
        # d/dt term contributes (c_R - c_L)/2 to both rows, the jump adds c_L
        # to the left row only
        jump = np.array([[0.5, 0.5], [-0.5, 0.5]])
        e_prev = np.array([1.0, 0.0])
    else:
        raise ValueError(f"temporal degree must be 0 or 1, got {k}")
    psi2 = _poly_basis(k, GAUSS2_S)
    psir = _poly_basis(k, qr_s)
    tmass = np.einsum("q,qa,qb->ab", GAUSS2_W, psi2, psi2)
    return {
        "q2_s": GAUSS2_S,
        "q2_w": GAUSS2_W,
        "q2_psi": psi2,
        "qr_s": qr_s,
        "qr_w": qr_w,
        "qr_psi": psir,
        "tmass": tmass,
        "jump": jump,
        "e_prev": e_prev,
    }


def time_quadrature(f, a: float, b: float) -> float:
    """Two point Gauss approximation of the integral of f over [a, b]."""
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    t = a + (b - a) * GAUSS2_S
    return float((b - a) * np.dot(GAUSS2_W, [f(ti) for ti in t]))


@dataclass(frozen=True)
class TimeGrid:
    """Partition 0 = t_0 < t_1 < ... < t_N = T."""

    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or len(knots) < 2:
            raise ValueError("a time grid needs at least two knots")
        if knots[0] != 0.0:
            raise ValueError("the grid must start at 0")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(cls, horizon: float, num_steps: int) -> "TimeGrid":
        if num_steps < 1:
            raise ValueError("need at least one step")
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        return cls(np.linspace(0.0, horizon, num_steps + 1))

    @property
    def tau(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def num_steps(self) -> int:
        return len(self.knots) - 1

    @property
    def quasi_uniformity(self) -> float:
        tau = self.tau
        return float(tau.max() / tau.min())

    def interval_of(self, t: float) -> int:
        """Index of the interval (t_{n-1}, t_n] containing t."""
        if not (self.knots[0] < t <= self.knots[-1]):
            raise ValueError(f"t={t} outside ({self.knots[0]}, {self.knots[-1]}]")
        return int(np.searchsorted(self.knots, t, side="left")) - 1


@dataclass
class SpaceTimeField:
    """dG(k) in time finite element field.

    coeffs has shape (N, k + 1, ndof); interval n holds the coefficients of
    the temporal basis on (t_{n-1}, t_n]. Evaluation is left-continuous, so
    the value at a knot t_n comes from interval n.
    """

    space: object
    grid: TimeGrid
    k: int
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.k not in (0, 1):
            raise ValueError(f"temporal degree must be 0 or 1, got {self.k}")
        shape = (self.grid.num_steps, self.k + 1, self.space.ndof)
        if self.coeffs is None:
            self.coeffs = np.zeros(shape)
        else:
            self.coeffs = np.asarray(self.coeffs, dtype=float)
            if self.coeffs.shape != shape:
                raise ValueError(f"coefficients have shape {self.coeffs.shape}, expected {shape}")

    @classmethod
    def zeros(cls, space, grid: TimeGrid, k: int) -> "SpaceTimeField":
        return cls(space, grid, k)

    @classmethod
    def constant(cls, space, grid: TimeGrid, k: int, values) -> "SpaceTimeField":
        f = cls(space, grid, k)
        vals = np.broadcast_to(np.asarray(values, dtype=float), (space.ndof,))
        f.coeffs[:, :, :] = vals
        return f

    def copy(self) -> "SpaceTimeField":
        return SpaceTimeField(self.space, self.grid, self.k, self.coeffs.copy())

    def end_value(self, n: int) -> np.ndarray:
        """Left limit at knot t_{n+1}, the last coefficient of interval n."""
        return self.coeffs[n, -1]

    def eval(self, t: float) -> np.ndarray:
        """Value at time t in (0, T], left-continuous at the knots."""
        n = self.grid.interval_of(t)
        if self.k == 0:
            return self.coeffs[n, 0].copy()
        s = (t - self.grid.knots[n]) / self.grid.tau[n]
        return (1.0 - s) * self.coeffs[n, 0] + s * self.coeffs[n, 1]

    def at_local(self, n: int, s: float) -> np.ndarray:
        """Value at local coordinate s of interval n without lookup."""
        psi = _poly_basis(self.k, np.array([s]))[0]
        return np.einsum("b,bi->i", psi, self.coeffs[n])
