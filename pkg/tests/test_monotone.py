import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from specest import monotone as mono
from specest.conic import Model
from specest.conic.solve import solve_checked

POLYHEDRAL = [
    mono.UnitBox(3),
    mono.ScaledBox((0.5, 2.0, 1.0)),
    mono.SimplexCap(3, 2.0),
    mono.Product((mono.UnitBox(1), mono.SimplexCap(2, 1.0))),
    mono.Lifted(mono.SimplexCap(2, 1.0), (2, 1)),
    mono.Lifted(mono.ScaledBox((1.0, 3.0)), (1, 2)),
]
ALL = POLYHEDRAL + [mono.PNormCap(3, 1.5), mono.PNormCap(3, 3.0), mono.PNormCap(2, 2.0)]


def _lp_rows(T):
    """Inequalities A t <= b (with t >= 0 implied) describing a polyhedral T, plus extra variables."""
    if isinstance(T, mono.UnitBox):
        return np.eye(T.dim), np.ones(T.dim), 0
    if isinstance(T, mono.ScaledBox):
        return np.eye(T.dim), np.array(T.upper), 0
    if isinstance(T, mono.SimplexCap):
        return np.ones((1, T.dim)), np.array([T.budget]), 0
    if isinstance(T, mono.Product):
        blocks = [_lp_rows(f)[:2] for f in T.factors]
        rows = sum(a.shape[0] for a, _ in blocks)
        A = np.zeros((rows, T.dim))
        r = c = 0
        for a, _ in blocks:
            A[r:r + a.shape[0], c:c + a.shape[1]] = a
            r, c = r + a.shape[0], c + a.shape[1]
        return A, np.concatenate([b for _, b in blocks]), 0
    if isinstance(T, mono.Lifted):
        # variables (t_hat, t): group sums of t_hat <= t, t in base
        Ab, bb, _ = _lp_rows(T.base)
        k, n = T.base.dim, T.dim
        S = np.zeros((k, n))
        start = 0
        for i, g in enumerate(T.groups):
            S[i, start:start + g] = 1.0
            start += g
        A = np.block([[S, -np.eye(k)], [np.zeros((Ab.shape[0], n)), Ab]])
        return A, np.concatenate([np.zeros(k), bb]), k
    raise TypeError(T)


def lp_support(T, g):
    A, b, extra = _lp_rows(T)
    c = -np.concatenate([g, np.zeros(extra)])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * A.shape[1], method="highs")
    assert res.status == 0
    return -res.fun


@pytest.mark.parametrize("T", POLYHEDRAL, ids=lambda T: type(T).__name__)
def test_support_matches_linear_programming(T, rng):
    for _ in range(10):
        g = rng.standard_normal(T.dim)
        assert T.support(g) == pytest.approx(lp_support(T, g), abs=1e-9)


def test_pnorm_support_is_dual_norm_of_positive_part():
    T = mono.PNormCap(3, 3.0)
    g = np.array([1.0, -2.0, 2.0])
    expected = np.linalg.norm([1.0, 0.0, 2.0], 1.5)
    assert T.support(g) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
@given(data=st.data())
def test_fenchel_inequality(T, data):
    t = np.array(data.draw(st.lists(st.floats(0, 10), min_size=T.dim, max_size=T.dim)))
    g = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=T.dim, max_size=T.dim)))
    assert g @ t <= T.gauge(t) * T.support(g) + 1e-9 * (1 + np.abs(g).sum() * np.abs(t).sum())


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_gauge_scales_points_onto_boundary(T, rng):
    for _ in range(10):
        t = rng.uniform(0.0, 2.0, T.dim)
        s = T.gauge(t)
        assert T.contains(t / s)
        assert not T.contains(t / s * 1.01)
        assert T.gauge(3.0 * t) == pytest.approx(3.0 * s)


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_positive_point_is_interior_and_positive(T):
    p = T.positive_point()
    assert np.all(p > 0)
    assert T.contains(p)


def test_monotonicity_under_shrinking(rng):
    for T in ALL:
        t = T.positive_point()
        assert T.contains(t * rng.uniform(0, 1, T.dim))
        assert not T.contains(-t)


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_record_round_trip(T):
    assert mono.from_record(T.to_record()) == T


def test_unknown_record_type():
    with pytest.raises(mono.UnsupportedVariantError):
        mono.from_record({"type": "cube"})


def test_lift_of_box_is_product_of_simplices():
    L = mono.lift(mono.UnitBox(2), (2, 3))
    assert L == mono.Product((mono.SimplexCap(2, 1.0), mono.SimplexCap(3, 1.0)))
    assert mono.lift(mono.SimplexCap(2, 1.0), (1, 1)) == mono.SimplexCap(2, 1.0)


def test_lifted_support_takes_group_maximum():
    T = mono.Lifted(mono.ScaledBox((1.0, 2.0)), (2, 2))
    assert T.support([3.0, -1.0, 0.5, 4.0]) == pytest.approx(3.0 + 2.0 * 4.0)


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_support_epigraph_is_tight(T, rng):
    g = rng.standard_normal(T.dim)
    m = Model()
    s = mono.add_support_epigraph(m, T, g + 0.0 * m.var(T.dim)[0])
    m.minimize(s)
    assert solve_checked(m.compile()).value == pytest.approx(T.support(g), abs=1e-6)


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_membership_constraint_maximizes_to_support(T, rng):
    g = rng.standard_normal(T.dim)
    m = Model()
    t = m.var(T.dim)
    mono.add_membership(m, T, t, 1.0)
    m.minimize(-t.dot(g))
    assert -solve_checked(m.compile()).value == pytest.approx(T.support(g), abs=1e-6)


@pytest.mark.parametrize("T", ALL, ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_dual_epigraph_rows(T, rng):
    rows = mono.dual_epigraph_rows(T)
    g = rng.standard_normal(T.dim)
    value = T.support(-g)
    assert rows.satisfied(g, value + 1e-6)
    assert not rows.satisfied(g, value - 1e-3 * max(1.0, abs(value)) - 1e-3)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        mono.UnitBox(2).support([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        mono.Lifted(mono.UnitBox(2), (1,))


def test_worked_examples():
    assert mono.UnitBox(3).support([1.0, -1.0, 2.0]) == 3.0
    assert mono.SimplexCap(2, 1.0).support([-1.0, -2.0]) == 0.0
    assert mono.PNormCap(2, 2.0).support([3.0, 4.0]) == pytest.approx(5.0)
    assert mono.UnitBox(2).contains([0.5, 1.0])
    assert not mono.PNormCap(2, 2.0).contains([1.0, 1.0])


def test_simplex_boundary_points_are_members(rng):
    T = mono.SimplexCap(3, 1.0)
    for t in rng.dirichlet(np.ones(3), 100):
        assert T.contains(t)


def test_simplex_epigraph_rows_by_hand(rng):
    rows = mono.dual_epigraph_rows(mono.SimplexCap(2, 1.0))
    for _ in range(20):
        g = rng.standard_normal(2)
        s = max(0.0, -g.min())
        assert rows.satisfied(g, s + 1e-6)
        assert not rows.satisfied(g, s - 1e-2)


def _boundary_max(T, g, levels=6, grid=101):
    """Maximize g't over the boundary of T by zooming a grid over direction angles."""
    K = T.dim
    lo, hi = np.zeros(K - 1), np.full(K - 1, np.pi / 2)
    best = -np.inf
    for _ in range(levels):
        axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
        ang = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, K - 1)
        if K == 2:
            t = np.column_stack([np.cos(ang[:, 0]), np.sin(ang[:, 0])])
        else:
            t = np.column_stack([np.cos(ang[:, 0]) * np.cos(ang[:, 1]),
                                 np.cos(ang[:, 0]) * np.sin(ang[:, 1]), np.sin(ang[:, 0])])
        t = np.clip(t, 0.0, None)
        vals = t @ g / np.array([T.gauge(x) for x in t])
        k = int(np.argmax(vals))
        best = max(best, vals[k])
        step = (hi - lo) / (grid - 1)
        lo = np.clip(ang[k] - 2 * step, 0.0, np.pi / 2)
        hi = np.clip(ang[k] + 2 * step, 0.0, np.pi / 2)
    return best


@pytest.mark.parametrize("T", [mono.UnitBox(2), mono.SimplexCap(3, 1.5), mono.PNormCap(3, 2.0),
                               mono.PNormCap(2, 1.5), mono.ScaledBox((1.0, 2.0, 0.5))],
                         ids=lambda T: f"{type(T).__name__}{T.dim}")
def test_support_against_sampling_oracle(T, rng):
    for _ in range(3):
        g = rng.standard_normal(T.dim)
        g[0] = abs(g[0])
        samples = rng.uniform(0.0, 1.0, (10_000, T.dim))
        samples /= np.maximum(np.array([T.gauge(t) for t in samples]), 1.0)[:, None]
        assert np.max(samples @ g) <= T.support(g) + 1e-12
        assert _boundary_max(T, g) == pytest.approx(T.support(g), abs=1e-4)
