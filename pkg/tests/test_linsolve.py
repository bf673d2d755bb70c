import numpy as np
import pytest
import scipy.sparse as sp

from cipimex.assembly import assemble_mass
from cipimex.linsolve import NonConvergenceError, SparseMatrix, cg_solve, spmv
from cipimex.mesh import generate_square_mesh
from cipimex.spaces import build_space


def test_spmv_identity():
    A = SparseMatrix(sp.eye(5, format="csr"))
    x = np.arange(5.0)
    assert np.array_equal(spmv(A, x), x)


def test_spmv_zero():
    A = SparseMatrix.zeros(4)
    assert np.abs(spmv(A, np.ones(4))).max() == 0.0


def test_spmv_hand_value():
    A = SparseMatrix(sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]])))
    assert np.allclose(spmv(A, np.array([1.0, 1.0])), [3.0, 4.0])


def test_spmv_dimension_mismatch():
    A = SparseMatrix.zeros(3)
    with pytest.raises(ValueError):
        spmv(A, np.ones(4))


def test_cg_identity_one_iteration():
    A = SparseMatrix(sp.eye(10, format="csr"))
    b = np.linspace(-1, 1, 10)
    x, it = cg_solve(A, b, preconditioner="none")
    assert it <= 1
    assert np.allclose(x, b)


def test_cg_diagonal_jacobi_one_iteration():
    d = np.arange(1.0, 11.0)
    A = SparseMatrix(sp.diags(d).tocsr())
    b = np.ones(10)
    x, it = cg_solve(A, b, preconditioner="jacobi")
    assert it == 1
    assert np.allclose(x, 1.0 / d)


def test_cg_zero_rhs():
    A = SparseMatrix(sp.eye(7, format="csr"))
    x, it = cg_solve(A, np.zeros(7))
    assert it == 0
    assert np.abs(x).max() == 0.0


def test_cg_mass_matrix_convergence():
    space = build_space(generate_square_mesh(20), 2)
    M = assemble_mass(space)
    rng = np.random.default_rng(0)
    b = rng.standard_normal(space.n_dofs)
    x, it = cg_solve(M, b, tol_rel=1e-10, max_iter=200)
    assert it <= 200
    assert np.linalg.norm(b - M @ x) <= 1e-10 * np.linalg.norm(b)


def test_cg_recovers_known_solution():
    space = build_space(generate_square_mesh(10), 1)
    M = assemble_mass(space)
    rng = np.random.default_rng(4)
    x0 = rng.standard_normal(space.n_dofs)
    b = M @ x0
    x, _ = cg_solve(M, b, tol_rel=1e-12)
    assert np.abs(x - x0).max() < 1e-8


def test_cg_warm_start_reduces_iterations():
    space = build_space(generate_square_mesh(15), 2)
    M = assemble_mass(space)
    rng = np.random.default_rng(8)
    b = rng.standard_normal(space.n_dofs)
    x_cold, it_cold = cg_solve(M, b)
    x_warm, it_warm = cg_solve(M, b, x0=x_cold)
    assert it_warm == 0
    b2 = b + 1e-6 * rng.standard_normal(space.n_dofs)
    _, it_near = cg_solve(M, b2, x0=x_cold)
    assert it_near < it_cold


def test_cg_residual_final_leq_initial():
    space = build_space(generate_square_mesh(12), 1)
    M = assemble_mass(space)
    rng = np.random.default_rng(12)
    b = rng.standard_normal(space.n_dofs)
    x, _ = cg_solve(M, b, tol_rel=1e-8)
    assert np.linalg.norm(b - M @ x) <= np.linalg.norm(b)


def test_cg_nonconvergence_error():
    space = build_space(generate_square_mesh(10), 2)
    M = assemble_mass(space)
    rng = np.random.default_rng(3)
    b = rng.standard_normal(space.n_dofs)
    with pytest.raises(NonConvergenceError) as exc:
        cg_solve(M, b, tol_rel=1e-14, max_iter=2)
    assert exc.value.residual > 0.0
    assert exc.value.iterations == 2


def test_cg_rejects_bad_preconditioner_name():
    A = SparseMatrix(sp.eye(3, format="csr"))
    with pytest.raises(ValueError):
        cg_solve(A, np.ones(3), preconditioner="ilu")


def test_sparse_matrix_algebra():
    A = SparseMatrix(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))
    B = SparseMatrix(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    C = A + 2.0 * B
    assert np.allclose(C.toarray(), [[1.0, 4.0], [2.0, 1.0]])
    assert np.allclose(A.transpose().toarray(), [[1.0, 0.0], [2.0, 1.0]])
    assert A.diagonal().tolist() == [1.0, 1.0]


def test_csr_indices_sorted_unique():
    space = build_space(generate_square_mesh(4), 2)
    M = assemble_mass(space)
    for i in range(M.shape[0]):
        cols = M.indices[M.indptr[i]:M.indptr[i + 1]]
        assert (np.diff(cols) > 0).all()
