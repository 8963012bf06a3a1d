import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from chbiot.sparse import (BlockSystem, LUFactor, ReusableLU, SingularMatrixError, SolverError,
                           as_csr, assemble_block_matrix, solve_general, solve_spd)


def laplacian_plus_identity(n=5):
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    return as_csr(T + sp.identity(n))


def test_spd_identity_and_diagonal(rng):
    b = rng.standard_normal(7)
    np.testing.assert_allclose(solve_spd(sp.identity(7), b), b, rtol=1e-14)
    np.testing.assert_allclose(solve_spd(sp.diags([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])


def test_spd_matches_dense_elimination(rng):
    A = laplacian_plus_identity()
    b = rng.standard_normal(5)
    x = solve_spd(A, b)
    np.testing.assert_allclose(x, scipy.linalg.solve(A.toarray(), b), atol=1e-10)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_spd_zero_rhs_and_failures():
    np.testing.assert_array_equal(solve_spd(sp.identity(3), np.zeros(3)), 0.0)
    with pytest.raises(SolverError):
        solve_spd(sp.diags([1.0, -1.0]), np.ones(2))
    with pytest.raises(SolverError) as info:
        solve_spd(laplacian_plus_identity(50), np.ones(50), tol=1e-15, maxiter=2)
    assert info.value.residual is not None and info.value.residual > 0
    with pytest.raises(ValueError):
        solve_spd(sp.identity(3), np.ones(4))


def test_general_permutation_and_swap(rng):
    P = sp.csr_matrix(np.eye(4)[[2, 0, 3, 1]])
    b = rng.standard_normal(4)
    np.testing.assert_allclose(solve_general(P, b), P.T @ b, atol=1e-15)
    np.testing.assert_allclose(solve_general(sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]]),
                                             np.array([3.0, 5.0])), [5, 3])


def test_general_random_sparse_vs_dense(rng):
    n = 50
    A = sp.random(n, n, density=0.1, random_state=np.random.RandomState(3)) + 2 * sp.identity(n)
    b = rng.standard_normal(n)
    x = solve_general(A, b)
    np.testing.assert_allclose(x, scipy.linalg.lu_solve(scipy.linalg.lu_factor(A.toarray()), b),
                               atol=1e-9)
    anorm = np.abs(A.toarray()).sum(axis=1).max()
    assert np.abs(A @ x - b).max() <= 1e-10 * (anorm * np.abs(x).max() + np.abs(b).max())


def test_singular_reports_location():
    A = sp.csr_matrix(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(SingularMatrixError) as info:
        solve_general(A, np.ones(3))
    assert info.value.location is not None
    with pytest.raises(ValueError):
        LUFactor(sp.csr_matrix(np.ones((2, 3))))


def test_spd_and_lu_agree(rng):
    A = laplacian_plus_identity(40)
    b = rng.standard_normal(40)
    np.testing.assert_allclose(solve_spd(A, b), solve_general(A, b), atol=1e-9)


def test_bit_reproducible(rng):
    A = laplacian_plus_identity(30) + sp.random(30, 30, density=0.05, random_state=1)
    b = rng.standard_normal(30)
    assert solve_general(A, b).tobytes() == solve_general(A, b).tobytes()
    S = laplacian_plus_identity(30)
    assert solve_spd(S, b).tobytes() == solve_spd(S, b).tobytes()


def test_reusable_lu_refines_and_refactors(rng):
    A = laplacian_plus_identity(60)
    b = rng.standard_normal(60)
    solver = ReusableLU()
    solver.solve(A, b)
    assert solver.n_factorisations == 1
    x = solver.solve(A + 1e-3 * sp.identity(60), b)  # small drift: reuse
    assert solver.n_factorisations == 1 and solver.last_iterations >= 1
    np.testing.assert_allclose((A + 1e-3 * sp.identity(60)) @ x, b, atol=1e-12)
    far = as_csr(sp.diags(rng.uniform(1, 100, 60)))
    x = solver.solve(far, b)  # unrelated matrix: refactor
    assert solver.n_factorisations == 2
    np.testing.assert_allclose(far @ x, b, atol=1e-12)


def test_csr_is_canonical():
    A = as_csr(sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2)))
    assert A.has_canonical_format
    assert A[0, 1] == 3.0


# --- block systems -----------------------------------------------------------------

def test_block_identity():
    s = BlockSystem([("a", 1), ("b", 1)],
                    {("a", "a"): sp.identity(1), ("b", "b"): sp.identity(1),
                     ("a", "b"): None, ("b", "a"): None})
    np.testing.assert_array_equal(assemble_block_matrix(s).toarray(), np.eye(2))


def test_off_diagonal_placement(rng):
    B = sp.csr_matrix(rng.standard_normal((2, 3)))
    s = BlockSystem([("u", 3), ("p", 2)],
                    {("u", "u"): None, ("u", "p"): None, ("p", "u"): B, ("p", "p"): None},
                    {"u": np.arange(3.0), "p": [7.0, 8.0]})
    dense = np.zeros((5, 5))
    dense[3:, :3] = B.toarray()
    np.testing.assert_array_equal(assemble_block_matrix(s).toarray(), dense)
    np.testing.assert_array_equal(s.rhs_vector(), [0, 1, 2, 7, 8])
    parts = s.split(np.arange(5.0))
    np.testing.assert_array_equal(parts["p"], [3, 4])
    assert s.size == 5 and s.offsets() == {"u": 0, "p": 3}


def test_block_diagonal_with_empty_off_diagonals(rng):
    A = sp.csr_matrix(rng.standard_normal((2, 2)))
    C = sp.csr_matrix(rng.standard_normal((3, 3)))
    s = BlockSystem([("x", 2), ("y", 3)],
                    {("x", "x"): A, ("y", "y"): C, ("x", "y"): None, ("y", "x"): None})
    np.testing.assert_array_equal(assemble_block_matrix(s).toarray(),
                                  scipy.linalg.block_diag(A.toarray(), C.toarray()))


def test_block_errors():
    s = BlockSystem([("x", 2)], {})
    with pytest.raises(KeyError):
        assemble_block_matrix(s)
    with pytest.raises(KeyError):
        s.rhs_vector()
    bad = BlockSystem([("x", 2)], {("x", "x"): sp.identity(3)})
    with pytest.raises(ValueError):
        assemble_block_matrix(bad)
