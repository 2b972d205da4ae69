import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specest.symlin import (NotPSDError, eigh, jacobi_eigh, max_eig, min_eig, psd_check, psd_factor, smat,
                            sqrt_psd, svec, svec_dim, svec_len, sym, sym_basis)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(square(n), square(n))))
def test_svec_preserves_frobenius_product(pair):
    X, Y = (sym(M) for M in pair)
    lhs = float(svec(X) @ svec(Y))
    rhs = float(np.sum(X * Y))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


@given(st.integers(1, 6).flatmap(square))
def test_smat_inverts_svec(M):
    S = sym(M)
    np.testing.assert_allclose(smat(svec(S)), S, atol=1e-12 * max(1.0, np.abs(S).max()))


def test_svec_layout_matches_hand_computation():
    M = np.array([[1.0, 2.0], [2.0, 5.0]])
    np.testing.assert_allclose(svec(M), [1.0, 2.0 * np.sqrt(2.0), 5.0])


def test_svec_batches_over_leading_axes(rng):
    M = sym(rng.standard_normal((4, 3, 3, 3)))
    out = svec(M)
    assert out.shape == (4, 3, 6)
    np.testing.assert_allclose(out[2, 1], svec(M[2, 1]))


def test_svec_dim_rejects_non_triangular_lengths():
    assert svec_dim(10) == 4
    with pytest.raises(ValueError):
        svec_dim(7)


def test_sym_basis_is_orthonormal():
    for n in (1, 2, 4):
        E = sym_basis(n)
        assert E.shape == (svec_len(n), n, n)
        gram = np.einsum("aij,bij->ab", E, E)
        np.testing.assert_allclose(gram, np.eye(svec_len(n)), atol=1e-15)


def test_jacobi_matches_lapack(rng):
    for n in (1, 2, 5, 9):
        M = sym(rng.standard_normal((n, n)))
        w, V = jacobi_eigh(M)
        w_ref, _ = eigh(M)
        np.testing.assert_allclose(w, w_ref, atol=1e-12)
        np.testing.assert_allclose(V @ np.diag(w) @ V.T, M, atol=1e-11)
        np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)


def test_jacobi_handles_repeated_eigenvalues():
    Q = np.linalg.qr(np.random.default_rng(3).standard_normal((4, 4)))[0]
    M = Q @ np.diag([1.0, 1.0, 1.0, -2.0]) @ Q.T
    w, _ = jacobi_eigh(M)
    np.testing.assert_allclose(w, [-2.0, 1.0, 1.0, 1.0], atol=1e-12)


def test_extreme_eigenvalues():
    M = np.diag([3.0, -1.0, 2.0])
    assert min_eig(M) == -1.0
    assert max_eig(M) == 3.0
    assert not psd_check(M)
    assert psd_check(np.diag([1.0, -1e-12]))


def test_non_finite_input_is_rejected():
    with pytest.raises(FloatingPointError):
        min_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_sqrt_psd(rng):
    G = rng.standard_normal((4, 2))
    M = G @ G.T
    R = sqrt_psd(M)
    np.testing.assert_allclose(R @ R, M, atol=1e-12)
    np.testing.assert_allclose(R, R.T)
    with pytest.raises(NotPSDError):
        sqrt_psd(np.diag([1.0, -0.1]))


def test_psd_factor_drops_null_space(rng):
    G = rng.standard_normal((5, 2))
    V = psd_factor(G @ G.T)
    assert V.shape == (5, 2)
    np.testing.assert_allclose(V @ V.T, G @ G.T, atol=1e-12)


def test_worked_examples():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(svec(A), [0.0, np.sqrt(2.0), 0.0])
    assert svec(A) @ svec(A) == pytest.approx(2.0)
    np.testing.assert_array_equal(svec(np.eye(2)), [1.0, 0.0, 1.0])
    np.testing.assert_array_equal(smat(np.array([1.0, 0.0, 1.0])), np.eye(2))
    assert min_eig(np.eye(3)) == 1.0
    assert min_eig(np.diag([2.0, -3.0])) == -3.0
    np.testing.assert_allclose(sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_round_trip_of_random_vectors(rng):
    worst = 0.0
    for _ in range(100):
        v = rng.standard_normal(svec_len(int(rng.integers(1, 7))))
        worst = max(worst, np.abs(svec(smat(v)) - v).max())
    assert worst < 1e-14


def test_gram_matrices_are_psd(rng):
    for _ in range(20):
        G = rng.standard_normal((4, 4))
        assert min_eig(G.T @ G) >= -1e-12
        R = sqrt_psd(G.T @ G)
        np.testing.assert_allclose(R @ R, G.T @ G, atol=1e-8)


def test_extreme_pair_against_characteristic_polynomial(rng):
    for n in (2, 3):
        for _ in range(10):
            M = sym(rng.standard_normal((n, n)))
            roots = np.sort(np.roots(np.poly(M)).real)
            assert min_eig(M) == pytest.approx(roots[0], abs=1e-9)
            assert max_eig(M) == pytest.approx(roots[-1], abs=1e-9)
            assert min_eig(-M) == pytest.approx(-max_eig(M), abs=1e-12)
