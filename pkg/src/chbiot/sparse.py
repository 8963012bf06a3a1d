"""Sparse operators and linear solvers.

CSR matrices are :class:`scipy.sparse.csr_matrix` with sorted, duplicate-free
column indices. The SPD solver is a Jacobi-preconditioned conjugate gradient
method; general systems go through SuperLU with threshold pivoting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` holds the last relative residual if known."""

    def __init__(self, message, residual=None, location=None):
        super().__init__(message)
        self.residual = residual
        self.location = location


class SingularMatrixError(SolverError):
    pass


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def solve_spd(A, b, tol=1e-12, maxiter=None, x0=None) -> np.ndarray:
    """Solve ``A x = b`` for SPD ``A`` by Jacobi-preconditioned CG.

    Stops when ``||A x - b|| <= tol * ||b||``.
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise SolverError("matrix has a non-positive diagonal entry; not SPD")
    dinv = 1.0 / d
    maxiter = maxiter or max(10 * n, 100)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    for _ in range(maxiter):
        if res <= tol:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise SolverError("non-positive curvature encountered; matrix not SPD", res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    # guard against drift of the recursive residual
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= tol:
        return x
    raise SolverError(f"CG did not converge in {maxiter} iterations (residual {res:.3e})", res)


def _locate_zero_pivot(A):
    if A.shape[0] > 4000:
        return None
    _, _, U = scipy.linalg.lu(A.toarray())
    d = np.abs(np.diag(U))
    return int(np.argmin(d))


class LUFactor:
    """Sparse LU with threshold pivoting, reusable for several right-hand sides.

    The default minimum-degree ordering on ``A^T + A`` with a diagonal-preferring
    pivot threshold suits the structurally symmetric block systems of the scheme.
    """

    def __init__(self, A, ordering="MMD_AT_PLUS_A", pivot_threshold=0.1):
        A = sp.csc_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        try:
            self._lu = spla.splu(A, permc_spec=ordering, diag_pivot_thresh=pivot_threshold,
                                options={"SymmetricMode": pivot_threshold < 1.0})
        except RuntimeError as exc:
            loc = _locate_zero_pivot(A)
            raise SingularMatrixError(f"matrix is singular ({exc}); zero pivot near row {loc}",
                                      location=loc) from exc
        udiag = np.abs(self._lu.U.diagonal())
        big = udiag.max() if udiag.size else 0.0
        small = np.flatnonzero(udiag <= n * np.finfo(float).eps * big)
        if small.size:
            loc = int(self._lu.perm_c[small[0]])
            raise SingularMatrixError(
                f"matrix is singular to working precision; pivot {small[0]} "
                f"(column {loc}) is {udiag[small[0]]:.3e}", location=loc)
        self.anorm = spla.norm(A, np.inf)

    def solve(self, b, check=True) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        x = self._lu.solve(b)
        if check:
            r = b - self.A @ x
            # one step of iterative refinement when the residual is not at roundoff level
            scale = self.anorm * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
            if np.abs(r).max(initial=0.0) > 1e-13 * scale:
                x += self._lu.solve(r)
                r = b - self.A @ x
            res = np.abs(r).max(initial=0.0)
            if res > 1e-10 * scale:
                raise SolverError(f"LU solve residual {res:.3e} exceeds tolerance", res)
        return x


class ReusableLU:
    """Solves a sequence of slowly varying systems with one factorisation.

    A stale factorisation is used as the preconditioner of an iterative
    refinement against the current matrix. When refinement contracts too slowly
    the matrix is refactored.
    """

    def __init__(self, max_iters=12, min_rate=0.2):
        self.max_iters = max_iters
        self.min_rate = min_rate
        self.factor = None
        self.n_factorisations = 0
        self.last_iterations = 0

    def _refine(self, A, b):
        lu = self.factor
        x = lu._lu.solve(b)
        r = b - A @ x
        res = np.abs(r).max(initial=0.0)
        for k in range(1, self.max_iters + 1):
            dx = lu._lu.solve(r)
            xn = x + dx
            rn = b - A @ xn
            rn_max = np.abs(rn).max(initial=0.0)
            if not rn_max < res:
                break
            rate = rn_max / res if res > 0 else 0.0
            x, r, res = xn, rn, rn_max
            if rate > self.min_rate and k > 1:
                # slow contraction: accept only if already at roundoff level
                break
        self.last_iterations = k
        scale = spla.norm(A, np.inf) * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
        return x, res <= 1e-14 * scale, k

    def solve(self, A, b) -> np.ndarray:
        A = sp.csc_matrix(A)
        b = np.asarray(b, dtype=np.float64)
        if self.factor is not None and self.factor.A.shape == A.shape:
            x, ok, k = self._refine(A, b)
            if ok and k <= self.max_iters:
                return x
        self.factor = LUFactor(A)
        self.n_factorisations += 1
        self.last_iterations = 0
        return self.factor.solve(b)


def solve_general(A, b) -> np.ndarray:
    """Direct sparse LU solve of a square nonsingular system."""
    return LUFactor(A).solve(b)


@dataclass
class BlockSystem:
    """Named row/column groups with sparse blocks and right-hand-side segments.

    Every (row, col) pair of the layout must be present in ``blocks``; a value of
    ``None`` stands for an all-zero block.
    """
    layout: list  # [(name, size), ...] in unknown order
    blocks: dict = field(default_factory=dict)  # (row_name, col_name) -> matrix or None
    rhs: dict = field(default_factory=dict)  # name -> vector

    @property
    def names(self):
        return [n for n, _ in self.layout]

    @property
    def sizes(self):
        return dict(self.layout)

    def offsets(self):
        off, out = 0, {}
        for name, size in self.layout:
            out[name] = off
            off += size
        return out

    @property
    def size(self) -> int:
        return sum(s for _, s in self.layout)

    def rhs_vector(self) -> np.ndarray:
        missing = [n for n in self.names if n not in self.rhs]
        if missing:
            raise KeyError(f"missing right-hand side segment(s): {missing}")
        return np.concatenate([np.asarray(self.rhs[n], dtype=np.float64) for n in self.names])

    def split(self, x) -> dict:
        off = self.offsets()
        return {n: x[off[n]:off[n] + s] for n, s in self.layout}


def assemble_block_matrix(system: BlockSystem) -> sp.csr_matrix:
    """Monolithic CSR matrix in layout order."""
    sizes = system.sizes
    grid = []
    for r in system.names:
        row = []
        for c in system.names:
            if (r, c) not in system.blocks:
                raise KeyError(f"block ({r}, {c}) missing")
            blk = system.blocks[(r, c)]
            if blk is None:
                blk = sp.csr_matrix((sizes[r], sizes[c]))
            elif blk.shape != (sizes[r], sizes[c]):
                raise ValueError(f"block ({r}, {c}) has shape {blk.shape}, "
                                 f"expected {(sizes[r], sizes[c])}")
            row.append(blk)
        grid.append(row)
    return as_csr(sp.bmat(grid, format="csr"))
