"""Assembly of P1 bilinear and linear forms.

Coefficients may be given as a scalar, per cell ``(nc,)`` or per quadrature
point ``(nc, nq)`` of the rule returned by :func:`~chbiot.quadrature.triangle_rule`.
Element contributions are accumulated into a fixed CSR pattern in a fixed
order, so repeated assembly is bit-reproducible.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from . import kernels
from .fespace import strain_operator, vertex_dofs
from .mesh import SimplicialMesh
from .quadrature import triangle_rule

DEFAULT_DEGREE = 6


class ScatterPattern:
    """CSR sparsity of element blocks with local rows ``row_dofs`` and columns ``col_dofs``.

    Negative dof indices are dropped (eliminated Dirichlet dofs).
    """

    def __init__(self, row_dofs, col_dofs, shape):
        nc, a = row_dofs.shape
        b = col_dofs.shape[1]
        R = np.broadcast_to(row_dofs[:, :, None], (nc, a, b)).ravel()
        C = np.broadcast_to(col_dofs[:, None, :], (nc, a, b)).ravel()
        valid = (R >= 0) & (C >= 0)
        keys = R[valid].astype(np.int64) * shape[1] + C[valid]
        ukeys, target = np.unique(keys, return_inverse=True)
        rows = ukeys // shape[1]
        self.indices = (ukeys % shape[1]).astype(np.int32)
        self.indptr = np.searchsorted(rows, np.arange(shape[0] + 1)).astype(np.int32)
        self.valid = np.flatnonzero(valid)
        self.target = target.astype(np.int64)
        self.shape = shape
        self.block = (a, b)
        self.nnz = len(ukeys)

    def matrix(self, element_values) -> sp.csr_matrix:
        vals = np.asarray(element_values, dtype=np.float64).reshape(-1)
        data = kernels.scatter_add(self.target, vals[self.valid], self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class FEContext:
    """Per-mesh, per-degree cache of quadrature data and scatter patterns."""

    def __init__(self, mesh: SimplicialMesh, degree: int):
        self.mesh = mesh
        self.rule = triangle_rule(degree)
        self.bary = self.rule.points  # P1 basis values at the points, (nq, 3)
        self.wdet = mesh.areas[:, None] * self.rule.weights[None, :]
        self.B = strain_operator(mesh)
        self.divrow = self.B[:, 0, :] + self.B[:, 1, :]
        self.BT = np.ascontiguousarray(self.B.transpose(0, 2, 1))
        # products of basis values at the points, (nq, 9)
        self.bary2 = (self.bary[:, :, None] * self.bary[:, None, :]).reshape(self.nq, 9)
        self._patterns = {}

    @property
    def nq(self):
        return self.rule.n_points

    def at_points(self, field):
        """Values of a nodal P1 field at the quadrature points, (nc, nq)."""
        return np.asarray(field, dtype=np.float64)[self.mesh.cells] @ self.bary.T

    def coordinates(self):
        """Physical quadrature points, (nc, nq, 2)."""
        return self.bary @ self.mesh.vertices[self.mesh.cells]

    def pattern(self, kind):
        if kind not in self._patterns:
            mesh = self.mesh
            sdofs = mesh.cells
            vdofs = vertex_dofs(mesh)[mesh.cells].reshape(mesh.n_cells, 6)
            adofs = np.stack([2 * mesh.cells, 2 * mesh.cells + 1], axis=2).reshape(-1, 6)
            nv, nu = mesh.n_vertices, 2 * len(mesh.interior_vertices)
            spec = {
                "ss": (sdofs, sdofs, (nv, nv)),
                "vv": (vdofs, vdofs, (nu, nu)),
                "sv": (sdofs, vdofs, (nv, nu)),
                "aa": (adofs, adofs, (2 * nv, 2 * nv)),
            }[kind]
            self._patterns[kind] = ScatterPattern(*spec)
        return self._patterns[kind]

    def point_values(self, coefficient):
        """Broadcast a scalar / per-cell / per-point coefficient to (nc, nq)."""
        c = np.asarray(coefficient, dtype=np.float64)
        nc = self.mesh.n_cells
        if c.ndim == 0:
            return np.full((nc, self.nq), float(c))
        if c.shape == (nc,):
            return np.repeat(c[:, None], self.nq, axis=1)
        if c.shape == (nc, self.nq):
            return c
        raise ValueError(f"coefficient shape {c.shape} fits neither (nc,)={nc} "
                         f"nor (nc, nq)=({nc}, {self.nq})")

    def cell_integral(self, coefficient, rank=0):
        """Integral over each cell of a coefficient with ``rank`` trailing tensor axes."""
        c = np.asarray(coefficient, dtype=np.float64)
        nc = self.mesh.n_cells
        if c.ndim == rank:
            return np.multiply.outer(self.mesh.areas, c)
        if c.ndim == rank + 1 and c.shape[0] == nc:
            return np.einsum("c,c...->c...", self.mesh.areas, c)
        if c.ndim == rank + 2 and c.shape[:2] == (nc, self.nq):
            flat = c.reshape(nc, self.nq, -1)
            return (self.wdet[:, None, :] @ flat).reshape((nc,) + c.shape[2:])
        raise ValueError(f"coefficient shape {c.shape} does not fit {nc} cells, "
                         f"{self.nq} points and tensor rank {rank}")


_contexts: "weakref.WeakKeyDictionary[SimplicialMesh, dict]" = weakref.WeakKeyDictionary()


def context(mesh: SimplicialMesh, degree: int = DEFAULT_DEGREE) -> FEContext:
    per_mesh = _contexts.setdefault(mesh, {})
    if degree not in per_mesh:
        per_mesh[degree] = FEContext(mesh, degree)
    return per_mesh[degree]


def assemble_mass(mesh, weight=1.0, degree=DEFAULT_DEGREE) -> sp.csr_matrix:
    """Weighted mass matrix  M_ij = int weight * phi_i * phi_j."""
    ctx = context(mesh, degree)
    w = ctx.wdet * ctx.point_values(weight)
    Me = w @ ctx.bary2
    return ctx.pattern("ss").matrix(Me)


def assemble_stiffness(mesh, coefficient=1.0, degree=DEFAULT_DEGREE) -> sp.csr_matrix:
    """K_ij = int coefficient * grad phi_i . grad phi_j."""
    ctx = context(mesh, degree)
    kc = ctx.cell_integral(coefficient)
    g = mesh.basis_gradients
    Ke = kc[:, None, None] * (g @ g.transpose(0, 2, 1))
    return ctx.pattern("ss").matrix(Ke)


def assemble_elasticity(mesh, C, degree=DEFAULT_DEGREE, dofs="interior") -> sp.csr_matrix:
    """K_ij = int eps(v_j) : C : eps(v_i) for Voigt ``C`` (3x3, per cell or per point).

    ``dofs="interior"`` eliminates boundary vertices; ``"all"`` keeps every vertex,
    ordered ``[ux0, uy0, ux1, uy1, ...]``.
    """
    ctx = context(mesh, degree)
    Cc = ctx.cell_integral(C, rank=2)
    Ke = ctx.BT @ (Cc @ ctx.B)
    return ctx.pattern("vv" if dofs == "interior" else "aa").matrix(Ke)


def assemble_divdiv(mesh, coefficient=1.0, degree=DEFAULT_DEGREE, dofs="interior"):
    """K_ij = int coefficient * div v_j * div v_i."""
    ctx = context(mesh, degree)
    kc = ctx.cell_integral(coefficient)
    Ke = kc[:, None, None] * (ctx.divrow[:, :, None] * ctx.divrow[:, None, :])
    return ctx.pattern("vv" if dofs == "interior" else "aa").matrix(Ke)


def assemble_strain_coupling(mesh, g, degree=DEFAULT_DEGREE) -> sp.csr_matrix:
    """Rectangular (scalar x displacement) matrix  A_ij = int (g . eps(v_j)) psi_i.

    ``g`` is a Voigt 3-vector field per quadrature point, (nc, nq, 3).
    """
    ctx = context(mesh, degree)
    H = ctx.wdet[:, :, None] * g
    Ae = (ctx.bary.T @ H) @ ctx.B
    return ctx.pattern("sv").matrix(Ae)


def assemble_div_coupling(mesh, coefficient=1.0, degree=DEFAULT_DEGREE) -> sp.csr_matrix:
    """D_ij = int coefficient * div v_j * psi_i  (scalar dofs x interior displacement dofs)."""
    ctx = context(mesh, degree)
    w = ctx.wdet * ctx.point_values(coefficient)
    De = (w @ ctx.bary)[:, :, None] * ctx.divrow[:, None, :]
    return ctx.pattern("sv").matrix(De)


def assemble_strain_load(mesh, g, degree=DEFAULT_DEGREE) -> np.ndarray:
    """Interior-dof vector  b_j = int g . eps(v_j)  for a Voigt field g, (nc, nq, 3)."""
    ctx = context(mesh, degree)
    be = (ctx.wdet[:, None, :] @ g @ ctx.B)[:, 0, :]
    vdofs = vertex_dofs(mesh)[mesh.cells].reshape(-1)
    keep = vdofs >= 0
    return np.bincount(vdofs[keep], weights=be.ravel()[keep],
                       minlength=2 * len(mesh.interior_vertices))


def _density_points(ctx, density):
    if callable(density):
        xq = ctx.coordinates()
        return ctx.point_values(np.broadcast_to(density(xq[..., 0], xq[..., 1]),
                                                xq.shape[:2]))
    return ctx.point_values(density)


def assemble_load(mesh, density, degree=DEFAULT_DEGREE) -> np.ndarray:
    """b_i = int density * psi_i; ``density`` may also be a callable f(x, y)."""
    ctx = context(mesh, degree)
    d = _density_points(ctx, density)
    be = (ctx.wdet * d) @ ctx.bary
    return np.bincount(mesh.cells.ravel(), weights=be.ravel(), minlength=mesh.n_vertices)


def assemble_vector_load(mesh, force, degree=DEFAULT_DEGREE) -> np.ndarray:
    """Interior-dof vector  b = int f . v  for a constant body force ``(fx, fy)``."""
    f = np.asarray(force, dtype=np.float64)
    base = assemble_load(mesh, 1.0, degree)[mesh.interior_vertices]
    return (base[:, None] * f[None, :]).ravel()


def integrate_density(mesh, density, degree=DEFAULT_DEGREE) -> float:
    """Quadrature integral over the domain of a per-point (or per-cell, callable) density."""
    ctx = context(mesh, degree)
    d = _density_points(ctx, density)
    return float((ctx.wdet * d).sum())
