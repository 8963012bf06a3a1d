"""Structured triangulations of the unit square and their uniform refinement."""
from __future__ import annotations

from functools import cached_property

import numpy as np

BOUNDARY_TOL = 1e-12


class MeshError(ValueError):
    pass


class SimplicialMesh:
    """Conforming triangle mesh of (0,1)^2.

    Parameters
    ----------
    vertices : (nv, 2) array
    cells : (nc, 3) int array, counterclockwise vertex triples
    level : refinement level
    midpoint_parents : (nv - n_parent, 2) int array, optional
        For meshes produced by :func:`refine_uniform`: the two coarse-mesh
        endpoints of the edge whose midpoint is vertex ``n_parent + i``.
    """

    def __init__(self, vertices, cells, level=0, midpoint_parents=None):
        vertices = np.array(vertices, dtype=np.float64).reshape(-1, 2)
        cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
        if cells.size and (cells.min() < 0 or cells.max() >= len(vertices)):
            raise MeshError("cell references a vertex index out of range")
        self.vertices = vertices
        self.cells = cells
        self.level = int(level)
        if midpoint_parents is not None:
            midpoint_parents = np.array(midpoint_parents, dtype=np.int64).reshape(-1, 2)
            midpoint_parents.setflags(write=False)
        self.midpoint_parents = midpoint_parents

        x, y = vertices[:, 0], vertices[:, 1]
        self.boundary_vertex_mask = (
            (np.abs(x) < BOUNDARY_TOL)
            | (np.abs(x - 1.0) < BOUNDARY_TOL)
            | (np.abs(y) < BOUNDARY_TOL)
            | (np.abs(y - 1.0) < BOUNDARY_TOL)
        )

        areas = self.signed_areas
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshError(f"cell {bad[0]} has non-positive signed area {areas[bad[0]]:.3e}")

        for arr in (self.vertices, self.cells, self.boundary_vertex_mask):
            arr.setflags(write=False)

    def __repr__(self):
        return (f"SimplicialMesh(level={self.level}, n_vertices={self.n_vertices}, "
                f"n_cells={self.n_cells})")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_parent_vertices(self) -> int:
        if self.midpoint_parents is None:
            raise MeshError("mesh carries no nesting metadata")
        return self.n_vertices - len(self.midpoint_parents)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        a = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        a.setflags(write=False)
        return a

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(nc, 3, 2) constant gradients of the three P1 hat functions per cell."""
        p = self.vertices[self.cells]
        x, y = p[..., 0], p[..., 1]
        twice_area = 2.0 * self.signed_areas
        g = np.empty((self.n_cells, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            g[:, a, 0] = (y[:, b] - y[:, c]) / twice_area
            g[:, a, 1] = (x[:, c] - x[:, b]) / twice_area
        g.setflags(write=False)
        return g

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted unique vertex pairs, shape (ne, 2)."""
        e = np.concatenate([self.cells[:, [0, 1]], self.cells[:, [1, 2]], self.cells[:, [2, 0]]])
        e.sort(axis=1)
        e = np.unique(e, axis=0)
        e.setflags(write=False)
        return e

    @cached_property
    def h_max(self) -> float:
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return float(np.sqrt((d * d).sum(axis=1)).max())

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        iv = np.flatnonzero(~self.boundary_vertex_mask)
        iv.setflags(write=False)
        return iv


def cell_geometry(mesh: SimplicialMesh, cell: int):
    """Area and the (3, 2) P1 basis gradients of one cell."""
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell index {cell} out of range for {mesh.n_cells} cells")
    return float(mesh.areas[cell]), np.array(mesh.basis_gradients[cell])


def build_unit_square_mesh(k: int) -> SimplicialMesh:
    """Uniform level-``k`` mesh: 2^k x 2^k squares, each cut along its main diagonal.

    Vertices are numbered row-major, ``i + j*(n+1)`` for the point (i/n, j/n).
    """
    if k < 0:
        raise ValueError("refinement level must be non-negative")
    n = 2 ** k
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = i + j * (n + 1)
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return SimplicialMesh(vertices, cells, level=k)


def refine_uniform(mesh: SimplicialMesh) -> SimplicialMesh:
    """Red refinement: every triangle split into four through its edge midpoints.

    Parent vertices keep their indices; midpoints are appended in sorted-edge order.
    """
    edges = mesh.edges
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])

    def midpoint(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * nv + hi
        idx = np.searchsorted(edges[:, 0] * nv + edges[:, 1], key)
        return nv + idx

    c0, c1, c2 = mesh.cells.T
    m01, m12, m20 = midpoint(c0, c1), midpoint(c1, c2), midpoint(c2, c0)
    cells = np.stack([
        np.column_stack([c0, m01, m20]),
        np.column_stack([m01, c1, m12]),
        np.column_stack([m20, m12, c2]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    return SimplicialMesh(vertices, cells, level=mesh.level + 1, midpoint_parents=edges)


def mesh_hierarchy(k_min: int, k_max: int) -> list[SimplicialMesh]:
    """Nested meshes for levels k_min..k_max, finer ones obtained by refinement."""
    meshes = [build_unit_square_mesh(k_min)]
    for _ in range(k_min, k_max):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes
