"""P1 Lagrange fields on a :class:`~chbiot.mesh.SimplicialMesh`.

Scalar fields (phi, mu, theta, p) are plain ``(nv,)`` arrays of nodal values.
Displacements are ``(nv, 2)`` arrays that vanish on the boundary; the solver
works with the flattened interior degrees of freedom, ordered
``[ux(v0), uy(v0), ux(v1), uy(v1), ...]`` over ``mesh.interior_vertices``.
"""
from __future__ import annotations

import numpy as np

from .mesh import SimplicialMesh


class FieldError(ValueError):
    pass


def interpolate_nodal(f, mesh: SimplicialMesh) -> np.ndarray:
    """Nodal interpolant of ``f(x, y)``; ``f`` is called on coordinate arrays."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=np.float64), x.shape).copy()
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = bad[0]
        raise FieldError(f"non-finite value {vals[i]} at vertex {i} {tuple(mesh.vertices[i])}")
    return vals


def prolong(field, fine: SimplicialMesh) -> np.ndarray:
    """Exact P1 injection of a coarse nodal field onto its refinement ``fine``.

    Works for scalar ``(n,)`` and vector ``(n, 2)`` fields.
    """
    if fine.midpoint_parents is None:
        raise FieldError("target mesh was not produced by refine_uniform")
    field = np.asarray(field, dtype=np.float64)
    n_parent = fine.n_parent_vertices
    if field.shape[0] != n_parent:
        raise FieldError(
            f"field has {field.shape[0]} values but the parent of level {fine.level} "
            f"has {n_parent} vertices")
    a, b = fine.midpoint_parents.T
    return np.concatenate([field, 0.5 * (field[a] + field[b])])


def apply_dirichlet(u, mesh: SimplicialMesh) -> np.ndarray:
    """Zero the displacement at boundary vertices."""
    u = np.array(u, dtype=np.float64).reshape(mesh.n_vertices, 2)
    u[mesh.boundary_vertex_mask] = 0.0
    return u


def n_displacement_dofs(mesh: SimplicialMesh) -> int:
    return 2 * len(mesh.interior_vertices)


def vertex_dofs(mesh: SimplicialMesh) -> np.ndarray:
    """(nv, 2) map from (vertex, component) to interior displacement dof, -1 on the boundary."""
    dofs = -np.ones((mesh.n_vertices, 2), dtype=np.int64)
    iv = mesh.interior_vertices
    dofs[iv, 0] = 2 * np.arange(len(iv))
    dofs[iv, 1] = 2 * np.arange(len(iv)) + 1
    return dofs


def restrict_displacement(u, mesh: SimplicialMesh) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64).reshape(mesh.n_vertices, 2)
    return u[mesh.interior_vertices].ravel()


def extend_displacement(dofs, mesh: SimplicialMesh) -> np.ndarray:
    u = np.zeros((mesh.n_vertices, 2))
    u[mesh.interior_vertices] = np.asarray(dofs).reshape(-1, 2)
    return u


def strain_operator(mesh: SimplicialMesh) -> np.ndarray:
    """(nc, 3, 6) map from the cell's nodal displacements to Voigt strain.

    Local ordering of the six cell values is ``[ux0, uy0, ux1, uy1, ux2, uy2]``;
    rows are (eps11, eps22, 2*eps12).
    """
    g = mesh.basis_gradients
    B = np.zeros((mesh.n_cells, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def strain(u, mesh: SimplicialMesh) -> np.ndarray:
    """Per-cell Voigt strain (eps11, eps22, 2*eps12) of a P1 displacement, shape (nc, 3)."""
    u = np.asarray(u, dtype=np.float64).reshape(mesh.n_vertices, 2)
    g = mesh.basis_gradients
    uc = u[mesh.cells]  # (nc, 3, 2)
    grad = np.einsum("cai,caj->cij", uc, g)  # grad[c, i, j] = d u_i / d x_j
    return np.column_stack([grad[:, 0, 0], grad[:, 1, 1], grad[:, 0, 1] + grad[:, 1, 0]])


def divergence(u, mesh: SimplicialMesh) -> np.ndarray:
    eps = strain(u, mesh)
    return eps[:, 0] + eps[:, 1]


def gradient(v, mesh: SimplicialMesh) -> np.ndarray:
    """Per-cell gradient (nc, 2) of a scalar P1 field."""
    v = np.asarray(v, dtype=np.float64)
    return np.einsum("ca,cad->cd", v[mesh.cells], mesh.basis_gradients)
