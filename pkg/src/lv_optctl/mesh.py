"""Structured triangulations of the unit square.

The solver operates on crossed uniform meshes: the square is divided into
n x n cells and every cell is split along its lower-left to upper-right
diagonal. All triangles are congruent right isosceles triangles, listed
counter-clockwise, and the mesh family is nested under doubling of n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Triangulation", "build_structured", "boundary_trace_map", "export_mesh", "mesh_edges"]


@dataclass(frozen=True)
class Triangulation:
    """Conforming triangle mesh of the unit square.

    Attributes
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.
    triangles : (nt, 3) int array
        Vertex indices of each triangle, counter-clockwise.
    boundary_edges : (nb, 2) int array
        Boundary edges as vertex index pairs, ordered counter-clockwise
        around the square starting at the corner (0, 0).
    h : float
        Longest edge length over all triangles.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    h: float
    n: int = field(default=0)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


def build_structured(n: int) -> Triangulation:
    """Build the crossed n x n triangulation of [0, 1]^2.

    Parameters
    ----------
    n : int
        Cells per side, must be >= 1. The mesh has (n + 1)^2 vertices and
        2 n^2 triangles with mesh size h = sqrt(2) / n.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    n = int(n)

    side = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(side, side, indexing="xy")
    # row-major: vertex (i, j) at (i/n, j/n) has index j*(n+1) + i
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    t = 0
    for j in range(n):
        for i in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            # split along the lower-left to upper-right diagonal, both CCW
            tris[t] = (v00, v10, v11)
            tris[t + 1] = (v00, v11, v01)
            t += 2

    # boundary walk: bottom, right, top, left, counter-clockwise from (0, 0)
    bottom = [(vid(i, 0), vid(i + 1, 0)) for i in range(n)]
    right = [(vid(n, j), vid(n, j + 1)) for j in range(n)]
    top = [(vid(i + 1, n), vid(i, n)) for i in range(n - 1, -1, -1)]
    left = [(vid(0, j + 1), vid(0, j)) for j in range(n - 1, -1, -1)]
    boundary = np.array(bottom + right + top + left, dtype=np.int64)

    return Triangulation(
        vertices=vertices,
        triangles=tris,
        boundary_edges=boundary,
        h=float(np.sqrt(2.0) / n),
        n=n,
    )


def mesh_edges(mesh: Triangulation) -> np.ndarray:
    """Unique undirected edges as a (ne, 2) array of sorted vertex pairs.

    The order is lexicographic and therefore independent of how triangles
    are listed; quadratic spaces rely on it for midpoint dof numbering.
    """
    e = np.vstack(
        [
            mesh.triangles[:, [0, 1]],
            mesh.triangles[:, [1, 2]],
            mesh.triangles[:, [2, 0]],
        ]
    )
    e.sort(axis=1)
    return np.unique(e, axis=0)


def boundary_trace_map(mesh: Triangulation, degree: int) -> np.ndarray:
    """Map boundary dof positions to volume dof indices.

    The returned array lists, counter-clockwise starting at (0, 0), the
    volume dof index of every dof sitting on the boundary of the square.
    For degree 1 these are the 4n perimeter vertices; degree 2 interleaves
    the edge midpoint dofs, giving 4n * degree entries. Midpoint dofs are
    numbered num_vertices + edge_index with edges in `mesh_edges` order,
    matching the quadratic space layout.
    """
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    if degree == 1:
        return mesh.boundary_edges[:, 0].copy()

    edges = mesh_edges(mesh)
    edge_id = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
    nv = mesh.num_vertices
    out = np.empty(2 * len(mesh.boundary_edges), dtype=np.int64)
    for k, (a, b) in enumerate(mesh.boundary_edges):
        key = (int(min(a, b)), int(max(a, b)))
        out[2 * k] = a
        out[2 * k + 1] = nv + edge_id[key]
    if len(np.unique(out)) != len(out):
        raise RuntimeError("boundary dof map is not injective")
    return out


def export_mesh(mesh: Triangulation, path: str | Path) -> Path:
    """Write the mesh as plain text with vertex, triangle and boundary blocks."""
    path = Path(path)
    with path.open("w") as f:
        f.write(f"# structured crossed mesh n={mesh.n} h={mesh.h:.12g}\n")
        f.write(f"vertices {mesh.num_vertices}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        f.write(f"triangles {mesh.num_triangles}\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a} {b} {c}\n")
        f.write(f"boundary_edges {len(mesh.boundary_edges)}\n")
        for a, b in mesh.boundary_edges:
            f.write(f"{a} {b}\n")
    return path
