import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specest import monotone as mono
from specest import spectratope as sp
from specest.symlin import smat, svec, sym


def random_map(rng, n=3, d=2):
    return sp.LinearMatrixMap(rng.standard_normal((n, d, d)))


@given(st.integers(0, 2**32 - 1))
def test_calR_star_is_adjoint(seed):
    rng = np.random.default_rng(seed)
    m = random_map(rng, n=3, d=3)
    Q = sym(rng.standard_normal((3, 3)))
    L = sym(rng.standard_normal((3, 3)))
    assert np.sum(m.calR(Q) * L) == pytest.approx(np.sum(Q * m.calR_star(L)), rel=1e-10, abs=1e-10)


def test_calR_of_rank_one_is_square(rng):
    m = random_map(rng)
    y = rng.standard_normal(3)
    Ry = m(y)
    np.testing.assert_allclose(m.calR(np.outer(y, y)), Ry @ Ry, atol=1e-12)


def test_calR_star_of_psd_is_psd(rng):
    m = random_map(rng, n=4, d=3)
    G = rng.standard_normal((3, 3))
    assert np.linalg.eigvalsh(m.calR_star(G @ G.T))[0] >= -1e-10


def test_restrict_composes(rng):
    m = random_map(rng, n=4)
    E = rng.standard_normal((4, 2))
    z = rng.standard_normal(2)
    np.testing.assert_allclose(m.restrict(E)(z), m(E @ z))


def test_box_membership_and_gauge():
    X = sp.box(2, [1.0, 2.0])
    assert X.contains([1.0, -2.0])
    assert not X.contains([1.01, 0.0])
    assert X.core.gauge_sq(np.array([0.5, 2.0])) == pytest.approx(1.0)
    assert X.core.gauge_sq(np.array([0.5, 6.0])) == pytest.approx(9.0)


def test_ell2_ball_membership(rng):
    X = sp.ell2_ball(3)
    for _ in range(20):
        x = rng.standard_normal(3)
        assert X.contains(x) == (np.linalg.norm(x) <= 1.0)


def test_lp_ball_gauge_is_norm(rng):
    for p in (2.0, 3.0, 4.0, np.inf):
        X = sp.lp_ball(4, p)
        x = rng.standard_normal(4)
        assert np.sqrt(X.core.gauge_sq(x)) == pytest.approx(np.linalg.norm(x, p), rel=1e-10)


def test_lp_ball_rejects_small_p():
    with pytest.raises(ValueError):
        sp.lp_ball(3, 1.5)


def test_matrix_box_membership():
    X = sp.matrix_box(np.eye(2))
    assert X.contains(svec(np.diag([1.0, -1.0])))
    assert not X.contains(svec(np.array([[1.0, 0.5], [0.5, 1.0]])))


def test_spectral_ball_gauge_is_spectral_norm(rng):
    X = sp.spectral_ball(2, 3)
    M = rng.standard_normal((2, 3))
    g = np.sqrt(X.core.gauge_sq(M.ravel()))
    assert g == pytest.approx(np.linalg.norm(M, 2), rel=1e-10)


def test_support_closed_forms(rng):
    w = rng.standard_normal(3)
    assert sp.support_value(sp.box(3), w) == pytest.approx(np.abs(w).sum(), abs=1e-7)
    assert sp.support_value(sp.ell2_ball(3), w) == pytest.approx(np.linalg.norm(w), abs=1e-7)
    assert sp.support_value(sp.lp_ball(3, 4.0), w) == pytest.approx(np.linalg.norm(w, 4.0 / 3.0), abs=1e-7)
    W = sym(rng.standard_normal((3, 3)))
    nuclear = np.abs(np.linalg.eigvalsh(W)).sum()
    assert sp.support_value(sp.matrix_box(np.eye(3)), svec(W)) == pytest.approx(nuclear, abs=1e-7)
    M = rng.standard_normal((2, 3))
    trace_norm = np.linalg.svd(M, compute_uv=False).sum()
    assert sp.support_value(sp.spectral_ball(2, 3), M.ravel()) == pytest.approx(trace_norm, abs=1e-7)
    assert sp.support_value(sp.box(3), np.zeros(3)) == 0.0


def test_ellitope_conversion_matches_quadratic_forms(rng):
    S1 = np.diag([1.0, 0.0, 0.0])
    F = rng.standard_normal((3, 2))
    S2 = F @ F.T
    X = sp.from_ellitope([S1, S2], mono.UnitBox(2))
    for _ in range(30):
        y = rng.standard_normal(3)
        expected = max(y @ S1 @ y, y @ S2 @ y)
        assert X.core.gauge_sq(y) == pytest.approx(expected, rel=1e-9)


def test_degenerate_sets_are_rejected():
    with pytest.raises(sp.DegenerateSetError):
        sp.from_ellitope([np.diag([1.0, 0.0])], mono.UnitBox(1))
    with pytest.raises(sp.DegenerateSetError):
        sp.BasicSpectratope((np.zeros((2, 1, 1)),), mono.UnitBox(1))
    with pytest.raises(ValueError):
        sp.matrix_box(np.diag([1.0, 0.0]))
    with pytest.raises(sp.DegenerateSetError):
        sp.NormDescriptor(sp.linear_image(sp.box(1), np.ones((2, 1))))


def test_samples_lie_in_the_set(rng):
    for X in (sp.box(3), sp.ell2_ball(2), sp.matrix_box(np.eye(2)),
              sp.linear_image(sp.box(2), rng.standard_normal((3, 2)))):
        pts = X.sample(rng, 50)
        assert pts.shape == (50, X.dim)
        assert all(X.contains(x, tol=1e-6) for x in pts)


def test_boundary_scale(rng):
    X = sp.ell2_ball(3)
    d = rng.standard_normal(3)
    a = X.boundary_scale(d)
    assert a * np.linalg.norm(d) == pytest.approx(1.0)
    Y = sp.linear_image(sp.box(2), np.diag([2.0, 3.0]))
    assert Y.boundary_scale(np.array([1.0, 0.0])) == pytest.approx(2.0)


def test_product_and_sum_supports_add(rng):
    A, B = sp.box(2), sp.ell2_ball(2)
    w = rng.standard_normal(4)
    prod = sp.product(A, B)
    expected = sp.support_value(A, w[:2]) + sp.support_value(B, w[2:])
    assert sp.support_value(prod, w) == pytest.approx(expected, abs=1e-6)
    s = sp.minkowski_sum(A, B)
    v = w[:2]
    assert sp.support_value(s, v) == pytest.approx(np.abs(v).sum() + np.linalg.norm(v), abs=1e-6)


def test_linear_image_support(rng):
    S = rng.standard_normal((3, 2))
    X = sp.linear_image(sp.box(2), S)
    w = rng.standard_normal(3)
    assert sp.support_value(X, w) == pytest.approx(np.abs(S.T @ w).sum(), abs=1e-6)


def test_intersection_of_boxes():
    X = sp.intersect(sp.box(2, [1.0, 3.0]), sp.box(2, [2.0, 1.0]))
    assert sp.support_value(X, [1.0, 1.0]) == pytest.approx(2.0, abs=1e-6)
    assert X.contains([1.0, 1.0])
    assert not X.contains([1.5, 0.0])


def test_inverse_image():
    X = sp.inverse_image(sp.box(2), np.diag([2.0, 0.5]))
    assert sp.support_value(X, [1.0, 1.0]) == pytest.approx(0.5 + 2.0, abs=1e-6)
    with pytest.raises(ValueError):
        sp.inverse_image(sp.box(2), np.ones((2, 2)))


def test_compose_dispatch():
    X = sp.compose("product", sp.box(1), sp.box(1))
    assert X.dim == 2
    with pytest.raises(ValueError):
        sp.compose("union", sp.box(1))


def test_zero_set():
    Z = sp.zero(3)
    assert Z.contains(np.zeros(3))
    assert not Z.contains(np.array([0.0, 1e-3, 0.0]))
    assert sp.support_value(Z, [1.0, 2.0, 3.0]) == pytest.approx(0.0, abs=1e-7)


def test_membership_gauge_for_non_injective_image():
    X = sp.linear_image(sp.box(3), np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    assert sp.membership_gauge(X, np.array([2.0, 0.5])) == pytest.approx(1.0, abs=1e-6)
    assert X.contains([1.9, -1.0])
    assert not X.contains([2.2, 0.0])


def test_record_round_trip(rng):
    X = sp.linear_image(sp.product(sp.box(2), sp.ell2_ball(2)), rng.standard_normal((3, 4)))
    Y = sp.from_record(X.to_record())
    np.testing.assert_array_equal(Y.Pmat, X.Pmat)
    x = X.sample(rng)
    assert Y.contains(x, tol=1e-6)


def test_norms(rng):
    u = rng.standard_normal(6)
    for p in (1.0, 1.5, 2.0):
        N = sp.lp_norm(6, p)
        assert N(u) == pytest.approx(np.linalg.norm(u, p))
        assert sp.support_value(N.dual_ball, u) == pytest.approx(N(u), abs=1e-6)
    M = rng.standard_normal((2, 3))
    assert sp.nuclear_norm(2, 3)(M.ravel()) == pytest.approx(np.linalg.svd(M, compute_uv=False).sum())
    W = sym(rng.standard_normal((3, 3)))
    assert sp.sym_nuclear_norm(3)(svec(W)) == pytest.approx(np.abs(np.linalg.eigvalsh(W)).sum())
    assert sp.sym_frobenius_norm(3)(svec(W)) == pytest.approx(np.linalg.norm(W))
    generic = sp.NormDescriptor(sp.box(3))
    assert generic(u[:3]) == pytest.approx(np.abs(u[:3]).sum(), abs=1e-6)
    with pytest.raises(ValueError):
        sp.lp_norm(3, 3.0)


@pytest.mark.parametrize("norm", [sp.lp_norm(3, 1.0), sp.nuclear_norm(2, 2), sp.sym_nuclear_norm(2),
                                  sp.NormDescriptor(sp.box(2))], ids=lambda n: n.kind)
def test_norm_record_round_trip(norm, rng):
    back = sp.norm_from_record(norm.to_record())
    u = rng.standard_normal(norm.dim)
    assert back(u) == pytest.approx(norm(u), abs=1e-6)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_support_dominates_sampled_points(seed):
    rng = np.random.default_rng(seed)
    X = sp.linear_image(sp.ell2_ball(2), rng.standard_normal((2, 2)))
    w = rng.standard_normal(2)
    h = sp.support_value(X, w)
    assert np.max(X.sample(rng, 200) @ w) <= h + 1e-6


def test_smat_of_matrix_box_sample_is_bounded(rng):
    X = sp.matrix_box(np.diag([1.0, 4.0]))
    for x in X.sample(rng, 20):
        w = np.linalg.eigvalsh(np.diag([1.0, 0.5]) @ smat(x) @ np.diag([1.0, 0.5]))
        assert np.all(np.abs(w) <= 1.0 + 1e-9)


def test_ell2_membership_near_the_sphere(rng):
    X = sp.ell2_ball(4)
    for _ in range(20):
        u = rng.standard_normal(4)
        u /= np.linalg.norm(u)
        assert X.contains(0.999 * u)
        assert not X.contains(1.001 * u)


def test_ellitope_membership_matches_quadratic_definition(rng):
    S = [np.diag([1.0, 0.0, 0.5]), np.diag([0.0, 2.0, 0.5])]
    T = mono.UnitBox(2)
    X = sp.from_ellitope(S, T)
    pts = rng.uniform(-1.5, 1.5, (1000, 3))
    expected = np.array([all(x @ Sk @ x <= 1.0 for Sk in S) for x in pts])
    got = np.array([X.contains(x) for x in pts])
    margin = np.array([max(x @ Sk @ x for Sk in S) for x in pts])
    clear = np.abs(margin - 1.0) > 1e-6
    np.testing.assert_array_equal(got[clear], expected[clear])


@pytest.mark.parametrize("u, v", [(1, 2), (2, 2)])
def test_spectral_ball_matches_svd(u, v, rng):
    X = sp.spectral_ball(u, v)
    pts = rng.uniform(-1.2, 1.2, (1000, u * v))
    top = np.array([np.linalg.svd(x.reshape(u, v), compute_uv=False)[0] for x in pts])
    clear = np.abs(top - 1.0) > 1e-6
    got = np.array([X.contains(x) for x in pts[clear]])
    np.testing.assert_array_equal(got, top[clear] <= 1.0)


def test_intersection_is_logical_and(rng):
    A, B = sp.ell2_ball(2), sp.box(2, [0.7, 1.2])
    X = sp.intersect(A, B)
    pts = rng.uniform(-1.3, 1.3, (1000, 2))
    clear = (np.abs(np.linalg.norm(pts, axis=1) - 1.0) > 1e-6) & (np.abs(np.abs(pts[:, 0]) - 0.7) > 1e-6)
    got = np.array([X.contains(x) for x in pts[clear]])
    want = np.array([A.contains(x) and B.contains(x) for x in pts[clear]])
    np.testing.assert_array_equal(got, want)


def test_product_size_adds():
    X, Y = sp.ell2_ball(3), sp.box(2)
    assert sp.product(X, Y).size == X.size + Y.size


def test_ell2_samples_fill_the_ball(rng):
    norms = np.linalg.norm(sp.ell2_ball(3).sample(rng, 1000), axis=1)
    assert 0.99 <= norms.max() <= 1.0


def test_calR_is_linear_and_monotone(rng):
    m = random_map(rng, n=3, d=3)
    P = sym(rng.standard_normal((3, 3)))
    Q = sym(rng.standard_normal((3, 3)))
    np.testing.assert_allclose(m.calR(2.0 * P - Q), 2.0 * m.calR(P) - m.calR(Q), atol=1e-12)
    G = rng.standard_normal((3, 3))
    low = P @ P.T
    high = low + G @ G.T
    assert np.linalg.eigvalsh(m.calR(high) - m.calR(low))[0] >= -1e-10
