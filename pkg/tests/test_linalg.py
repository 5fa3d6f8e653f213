import numpy as np
import pytest
import scipy.sparse as sp

from crlab.linalg import (SingularSystemError, SparseSystem, assemble_blocks, constrained_min_eig, dense_rank,
                          dump_matrix_market, is_positive_definite, min_eig_sym, relative_residual, solve)


def thomas(a, b, c, d):
    n = len(b)
    cp, dp = np.zeros(n), np.zeros(n)
    cp[0], dp[0] = c[0] / b[0], d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m if i < n - 1 else 0.0
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x = np.zeros(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def test_identity():
    e1 = np.eye(5)[0]
    np.testing.assert_array_equal(solve(SparseSystem(sp.identity(5, format="csr"), e1)), e1)


def test_tridiagonal_against_thomas():
    n = 10
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    x = solve(SparseSystem(A, np.ones(n)))
    want = thomas(np.r_[0, -np.ones(n - 1)], 2 * np.ones(n), np.r_[-np.ones(n - 1), 0], np.ones(n))
    np.testing.assert_allclose(x, want, atol=1e-12)


def test_saddle_point_and_blocks():
    A = sp.csr_matrix(np.diag([2.0, 3.0, 4.0]))
    C = sp.csr_matrix([[1.0, 1.0, 1.0]])
    s = assemble_blocks([[A, C.T], [C, None]], [np.ones(3), np.zeros(1)], ["u", "m"])
    assert s.blocks == [3, 1]
    assert s.block_slices()["m"] == slice(3, 4)
    assert s.symmetry_defect() == 0.0
    x = solve(s)
    assert relative_residual(s, x) <= 1e-14
    assert x[:3].sum() == pytest.approx(0.0, abs=1e-14)


def test_singular_reports_block():
    A = sp.csr_matrix(np.diag([1.0, 1.0]))
    C = sp.csr_matrix((1, 2))
    s = assemble_blocks([[A, C.T], [C, None]], [np.ones(2), np.zeros(1)], ["u", "multiplier"])
    with pytest.raises(SingularSystemError, match="multiplier"):
        solve(s)
    with pytest.raises(SingularSystemError):
        solve(SparseSystem(sp.csr_matrix(np.ones((3, 3))), np.ones(3)))


def test_solve_deterministic(rng):
    M = sp.random(40, 40, density=0.2, random_state=1) + 10 * sp.identity(40)
    b = rng.standard_normal(40)
    s = SparseSystem(M, b)
    assert solve(s).tobytes() == solve(s).tobytes()


def test_bad_shapes():
    with pytest.raises(ValueError):
        SparseSystem(sp.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(ValueError):
        SparseSystem(sp.identity(3), np.ones(2))


def test_dense_rank_and_eigs(rng):
    assert dense_rank(np.zeros((4, 4))) == 0
    B = rng.standard_normal((6, 3))
    assert dense_rank(B @ B.T) == 3
    G = B.T @ B
    assert min_eig_sym(G) == pytest.approx(np.linalg.eigvalsh(G)[0])
    A = np.diag([1.0, -1.0])
    assert not is_positive_definite(A)
    C = np.array([[0.0, 1.0]])
    assert is_positive_definite(A, sp.csr_matrix(C))
    assert constrained_min_eig(A, sp.csr_matrix(C)) == pytest.approx(1.0)


def test_matrix_market_dump(tmp_path):
    import scipy.io
    s = SparseSystem(sp.identity(3, format="csr") * 2.0, np.ones(3))
    dump_matrix_market(s, tmp_path / "a.mtx")
    np.testing.assert_array_equal(scipy.io.mmread(str(tmp_path / "a.mtx")).toarray(), 2.0 * np.eye(3))
