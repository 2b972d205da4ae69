import math

import numpy as np
import pytest

from specest import experiments as ex


def test_matrix_box_side():
    assert ex.matrix_box_side(8) == 4
    assert ex.matrix_box_side(16) == 6
    for n in range(1, 40):
        d = ex.matrix_box_side(n)
        assert d * d >= 2 * n > (d - 1) ** 2


@pytest.mark.parametrize("family", ex.DUAL_FAMILIES)
def test_subopt_instance_structure(family):
    p = ex.subopt_instance(8, family, np.random.default_rng(0))
    assert p.A.shape == (4, 8)
    s = np.linalg.svd(p.A, compute_uv=False)
    np.testing.assert_allclose(s, np.geomspace(1.0, 0.01, 4), rtol=1e-12)
    np.testing.assert_array_equal(p.B, np.eye(8))
    # weighted box: j |x_j| <= 1
    assert p.X.contains(np.array([1.0] + [0.0] * 7))
    assert not p.X.contains(np.array([0.0, 0.6] + [0.0] * 6))
    with pytest.raises(ValueError):
        ex.subopt_instance(8, "simplex", np.random.default_rng(0))


def test_subopt_rows_are_order_independent():
    rows = ex.subopt_experiment([4], 2, 9, ("parallelotope",), trials=8)
    again = ex.run_subopt_replicate(ex.SuboptTask(9, 4, "parallelotope", 1, 8))
    assert rows[1] == again
    s = ex.subopt_summary(rows)
    assert s["chain_holds"] == 2
    assert s["theory_factor_range"][0] == pytest.approx(2 * math.log(2 * rows[0]["size"]))


def test_cov_summary_flags_cells():
    rows = [{"T": 8, "beta": 0.0, "opt": 1.0, "ratio_opt": r, "ratio_mle": 1.0} for r in (0.5, 0.6, 0.7)]
    rows += [{"T": 8, "beta": 1.0, "opt": 1.0, "ratio_opt": r, "ratio_mle": 1.0} for r in (1.5, 1.6, 1.7)]
    cells = ex.cov_summary(rows)["cells"]
    assert [c["within_bound"] for c in cells] == [True, False]
    assert cells[0]["mean_ratio"] == pytest.approx(0.6)


def test_bound_ratio():
    assert ex.bound_ratio(2.0, 1.0) == 2.0
    assert ex.bound_ratio(1e-10, 0.0) == 1.0
    assert ex.bound_ratio(1.0, 0.0) == math.inf
