"""Lagrange finite element spaces and assembly on triangle meshes.

Degrees 1 and 2 are supported. All volume integrals use a six point rule
that is exact for polynomials of degree four, which covers quadratic mass
terms exactly and the trilinear reaction terms adequately; boundary
integrals use three point Gauss per edge. Assembly is vectorized over
elements and deterministic for a fixed mesh, independently of triangle
ordering up to floating point roundoff.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from lv_optctl.errors import SparseSolveError
from lv_optctl.mesh import Triangulation, boundary_trace_map, mesh_edges

__all__ = [
    "FeSpace",
    "BoundarySpace",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_boundary_mass",
    "assemble_weighted_reaction",
    "assemble_load",
    "solve_sparse",
    "interpolate",
    "evaluate_field",
    "evaluation_matrix",
]

# degree 4 rule on the reference triangle, weights sum to 1/2
_A1 = 0.445948490915965
_A2 = 0.091576213509771
_W1 = 0.223381589678011 / 2.0
_W2 = 0.109951743655322 / 2.0
TRI_QPTS = np.array(
    [
        [_A1, _A1],
        [1.0 - 2.0 * _A1, _A1],
        [_A1, 1.0 - 2.0 * _A1],
        [_A2, _A2],
        [1.0 - 2.0 * _A2, _A2],
        [_A2, 1.0 - 2.0 * _A2],
    ]
)
TRI_QWTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

# three point Gauss on [0, 1]
_G3 = 0.5 * np.sqrt(3.0 / 5.0)
EDGE_QPTS = np.array([0.5 - _G3, 0.5, 0.5 + _G3])
EDGE_QWTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def _ref_basis(degree: int, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference basis values and gradients at points (m, 2).

    Returns (phi, grad) with shapes (m, nloc) and (m, nloc, 2). Local dof
    order: vertices (0,0), (1,0), (0,1), then for degree 2 the midpoints of
    edges (v0,v1), (v1,v2), (v2,v0).
    """
    xi = pts[:, 0]
    eta = pts[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        grad = np.broadcast_to(dlam, (len(pts), 3, 2)).copy()
        return lam.copy(), grad
    if degree == 2:
        m = len(pts)
        phi = np.empty((m, 6))
        grad = np.empty((m, 6, 2))
        for i in range(3):
            phi[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            grad[:, i, :] = (4.0 * lam[:, i, None] - 1.0) * dlam[i]
        edges = [(0, 1), (1, 2), (2, 0)]
        for k, (i, j) in enumerate(edges):
            phi[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
            grad[:, 3 + k, :] = 4.0 * (lam[:, i, None] * dlam[j] + lam[:, j, None] * dlam[i])
        return phi, grad
    raise ValueError(f"degree must be 1 or 2, got {degree}")


class FeSpace:
    """Continuous Lagrange space on a triangulation.

    Parameters
    ----------
    mesh : Triangulation
    degree : int
        Polynomial degree, 1 or 2. Degree 2 adds one dof per edge midpoint.
    bc_kind : str
        "dirichlet" pins every boundary dof to zero in solves; "free"
        leaves all dofs unconstrained (Robin problems).

    Instances are immutable by convention and safe to share across threads;
    assembled matrices are cached on first use.
    """

    def __init__(self, mesh: Triangulation, degree: int, bc_kind: str = "dirichlet"):
        if degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {degree}")
        if bc_kind not in ("dirichlet", "free"):
            raise ValueError(f"bc_kind must be 'dirichlet' or 'free', got {bc_kind!r}")
        self.mesh = mesh
        self.degree = degree
        self.bc_kind = bc_kind

        nv = mesh.num_vertices
        if degree == 1:
            self.element_dofs = mesh.triangles.copy()
            self.dof_coords = mesh.vertices.copy()
        else:
            edges = mesh_edges(mesh)
            edge_id = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
            tris = mesh.triangles
            ed = np.empty((len(tris), 3), dtype=np.int64)
            for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
                a = np.minimum(tris[:, i], tris[:, j])
                b = np.maximum(tris[:, i], tris[:, j])
                ed[:, k] = [edge_id[(int(x), int(y))] for x, y in zip(a, b)]
            self.element_dofs = np.hstack([tris, nv + ed])
            mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mid])

        self.ndof = self.dof_coords.shape[0]
        self.boundary_dofs = boundary_trace_map(mesh, degree)
        if bc_kind == "dirichlet":
            self.dirichlet_dofs = self.boundary_dofs.copy()
        else:
            self.dirichlet_dofs = np.empty(0, dtype=np.int64)
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.dirichlet_dofs] = False
        self.free_dofs = np.flatnonzero(mask)

        # geometry: affine maps are constant per element
        v0 = mesh.vertices[mesh.triangles[:, 0]]
        v1 = mesh.vertices[mesh.triangles[:, 1]]
        v2 = mesh.vertices[mesh.triangles[:, 2]]
        jac = np.stack([v1 - v0, v2 - v0], axis=2)  # (nt, 2, 2), columns are edge vectors
        self.detJ = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(self.detJ <= 0):
            raise ValueError("mesh contains a non counter-clockwise triangle")
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        self._jac_inv = inv / self.detJ[:, None, None]

        self.phi, gradref = _ref_basis(degree, TRI_QPTS)
        # physical gradients: grad_phys = J^{-T} grad_ref
        self.grad_phys = np.einsum("qia,tab->tqib", gradref, self._jac_inv)
        # physical quadrature points per element
        self.qpoints = v0[:, None, :] + np.einsum("qa,tab->tqb", TRI_QPTS, np.transpose(jac, (0, 2, 1)))
        # volume element per (element, qpoint)
        self.dvol = self.detJ[:, None] * TRI_QWTS[None, :]

        nl = self.element_dofs.shape[1]
        self._coo_rows = np.repeat(self.element_dofs, nl, axis=1).ravel()
        self._coo_cols = np.tile(self.element_dofs, (1, nl)).ravel()
        self._cache: dict[str, sp.csr_matrix] = {}

    # -- cached standard matrices ------------------------------------------

    @property
    def mass(self) -> sp.csr_matrix:
        if "mass" not in self._cache:
            self._cache["mass"] = assemble_mass(self)
        return self._cache["mass"]

    @property
    def stiffness(self) -> sp.csr_matrix:
        if "stiffness" not in self._cache:
            self._cache["stiffness"] = assemble_stiffness(self)
        return self._cache["stiffness"]

    @property
    def boundary_mass(self) -> sp.csr_matrix:
        if "bmass" not in self._cache:
            self._cache["bmass"] = assemble_boundary_mass(self)
        return self._cache["bmass"]

    def _scatter(self, local: np.ndarray) -> sp.csr_matrix:
        a = sp.coo_matrix(
            (local.ravel(), (self._coo_rows, self._coo_cols)), shape=(self.ndof, self.ndof)
        )
        return a.tocsr()


def assemble_mass(space: FeSpace) -> sp.csr_matrix:
    """Mass matrix, entries integral of phi_i phi_j over the square."""
    local = np.einsum("tq,qi,qj->tij", space.dvol, space.phi, space.phi)
    return space._scatter(local)


def assemble_stiffness(space: FeSpace) -> sp.csr_matrix:
    """Stiffness matrix, entries integral of grad phi_i . grad phi_j."""
    local = np.einsum("tq,tqib,tqjb->tij", space.dvol, space.grad_phys, space.grad_phys)
    return space._scatter(local)


def assemble_boundary_mass(space: FeSpace) -> sp.csr_matrix:
    """Boundary mass matrix over the square's perimeter.

    Only meaningful for unconstrained spaces; a Dirichlet space would pin
    every supported dof, so requesting it there raises RuntimeError.
    """
    if space.bc_kind != "free":
        raise RuntimeError("boundary mass is only available on a 'free' space")
    mesh = space.mesh
    nv = mesh.num_vertices
    s = EDGE_QPTS
    if space.degree == 1:
        trace = np.stack([1.0 - s, s], axis=1)  # (nq, 2)
        edofs = mesh.boundary_edges
    else:
        trace = np.stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)], axis=1)
        edges = mesh_edges(mesh)
        edge_id = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
        mids = np.array(
            [
                nv + edge_id[(int(min(a, b)), int(max(a, b)))]
                for a, b in mesh.boundary_edges
            ],
            dtype=np.int64,
        )
        edofs = np.column_stack([mesh.boundary_edges, mids])

    pa = mesh.vertices[mesh.boundary_edges[:, 0]]
    pb = mesh.vertices[mesh.boundary_edges[:, 1]]
    lengths = np.linalg.norm(pb - pa, axis=1)
    local = np.einsum("e,q,qi,qj->eij", lengths, EDGE_QWTS, trace, trace)
    nl = edofs.shape[1]
    rows = np.repeat(edofs, nl, axis=1).ravel()
    cols = np.tile(edofs, (1, nl)).ravel()
    a = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    return a.tocsr()


def assemble_weighted_reaction(space: FeSpace, w, shift: float = 0.0) -> sp.csr_matrix:
    """Matrix with entries integral of (shift + w_h) phi_i phi_j.

    `w` is a coefficient vector of a function in the same space, or None
    for a pure shift. Linear in (shift, w); with w = None, shift = 1 this
    reproduces the mass matrix.
    """
    if w is None:
        wq = np.full((space.element_dofs.shape[0], len(TRI_QWTS)), shift)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (space.ndof,):
            raise ValueError(f"weight has shape {w.shape}, expected ({space.ndof},)")
        wq = shift + w[space.element_dofs] @ space.phi.T
    local = np.einsum("tq,qi,qj->tij", space.dvol * wq, space.phi, space.phi)
    return space._scatter(local)


def assemble_load(space: FeSpace, f) -> np.ndarray:
    """Load vector with entries integral of f phi_i.

    `f` is either a callable f(x1, x2) accepting arrays, or an array of
    values at the element quadrature points with shape (nt, nq).
    """
    if callable(f):
        fq = f(space.qpoints[:, :, 0], space.qpoints[:, :, 1])
        fq = np.broadcast_to(fq, space.dvol.shape)
    else:
        fq = np.asarray(f, dtype=float)
        if fq.shape != space.dvol.shape:
            raise ValueError(f"quadrature values have shape {fq.shape}, expected {space.dvol.shape}")
    contrib = np.einsum("tq,qi->ti", space.dvol * fq, space.phi)
    out = np.zeros(space.ndof)
    np.add.at(out, space.element_dofs.ravel(), contrib.ravel())
    return out


class _LuSolver:
    """Shared direct solver wrapper with a residual guard."""

    def __init__(self, matrix: sp.spmatrix):
        self.matrix = matrix.tocsc()
        self.lu = spla.splu(self.matrix)

    def solve(self, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        x = self.lu.solve(rhs)
        scale = np.linalg.norm(rhs)
        if scale == 0.0:
            return x
        rel = np.linalg.norm(self.matrix @ x - rhs) / scale
        if not np.isfinite(rel) or rel > tol:
            try:
                cond = spla.onenormest(self.matrix) * spla.onenormest(self.lu.solve, t=2)
                diag = f"estimated 1-norm condition {cond:.3e}"
            except Exception:
                diag = "condition estimate unavailable"
            raise SparseSolveError(
                f"sparse solve residual {rel:.3e} exceeds {tol:.1e} ({diag})",
                relative_residual=float(rel),
                diagnostic=diag,
            )
        return x


def solve_sparse(matrix: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Direct sparse solve with a relative residual check.

    Raises SparseSolveError, carrying the residual and a conditioning
    diagnostic, when the factorization cannot reach the requested residual.
    """
    return _LuSolver(matrix).solve(np.asarray(rhs, dtype=float), tol=tol)


def interpolate(space: FeSpace, f) -> np.ndarray:
    """Nodal interpolant: evaluate f at every dof location."""
    x = space.dof_coords
    vals = f(x[:, 0], x[:, 1])
    return np.asarray(np.broadcast_to(vals, (space.ndof,)), dtype=float).copy()


def _locate(space: FeSpace, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Locate points in the structured mesh.

    Returns (tri, phi): containing triangle per point and the local basis
    values there, using the fixed lower-left to upper-right cell split for
    O(1) lookup.
    """
    n = space.mesh.n
    if n < 1:
        raise ValueError("point evaluation requires a structured mesh")
    pts = np.asarray(pts, dtype=float)
    x = np.clip(pts[:, 0], 0.0, 1.0) * n
    y = np.clip(pts[:, 1], 0.0, 1.0) * n
    i = np.minimum(x.astype(np.int64), n - 1)
    j = np.minimum(y.astype(np.int64), n - 1)
    xl = x - i
    yl = y - j
    lower = xl >= yl
    tri = 2 * (j * n + i) + np.where(lower, 0, 1)
    xi = np.where(lower, xl - yl, xl)
    eta = np.where(lower, yl, yl - xl)
    phi, _ = _ref_basis(space.degree, np.column_stack([xi, eta]))
    return tri, phi


def evaluate_field(space: FeSpace, coeffs: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Evaluate a finite element function at arbitrary points of the square.

    `pts` has shape (m, 2); returns values of shape (m,).
    """
    tri, phi = _locate(space, pts)
    c = np.asarray(coeffs, dtype=float)[space.element_dofs[tri]]
    return np.einsum("mi,mi->m", phi, c)


def evaluation_matrix(space: FeSpace, pts: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix E with (E @ coeffs)[m] = value of the field at pts[m].

    Built once and reused when the same points are sampled repeatedly, for
    instance when a field on one mesh serves as data on another.
    """
    tri, phi = _locate(space, pts)
    m, nloc = phi.shape
    rows = np.repeat(np.arange(m), nloc)
    cols = space.element_dofs[tri].ravel()
    return sp.csr_matrix((phi.ravel(), (rows, cols)), shape=(m, space.ndof))


class BoundarySpace:
    """Trace space on the perimeter of the square.

    Holds the volume dof indices of the boundary dofs in counter-clockwise
    order and the boundary mass matrix restricted to them. Robin controls
    live here; `lift` embeds a boundary vector into the volume space and
    `restrict` extracts boundary values from a volume vector.
    """

    def __init__(self, volume_space: FeSpace):
        if volume_space.bc_kind != "free":
            raise RuntimeError("a trace space requires an unconstrained volume space")
        self.volume_space = volume_space
        self.trace_dofs = volume_space.boundary_dofs
        self.ndof = len(self.trace_dofs)
        self.dof_coords = volume_space.dof_coords[self.trace_dofs]
        b = volume_space.boundary_mass
        self.mass = b[np.ix_(self.trace_dofs, self.trace_dofs)].tocsr()

    def lift(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.volume_space.ndof)
        out[self.trace_dofs] = values
        return out

    def restrict(self, volume_values: np.ndarray) -> np.ndarray:
        return np.asarray(volume_values)[self.trace_dofs].copy()
