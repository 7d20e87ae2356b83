"""Tests for fbmhit.hitlab: hitting estimators, ladders and diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fbmhit.gauss import Drift, ProcessSpec
from fbmhit.hitlab import (
    HittingExperiment,
    Target,
    Thresholds,
    TimeSet,
    estimate_hitting,
    grid_floor,
    image_measure_estimate,
    kernel_expectation_check,
    ladder_change,
    ladder_ratios,
    point_hitting_via_graph,
    polarity_dichotomy,
    sandwich_check,
)
from fbmhit.metric import PointCloud
from fbmhit.sets import build_cantor_lambda
from fbmhit.svf import SlowVarySpec

BM = ProcessSpec.fbm(0.5)


def _no_zero(a, b):
    """P{Brownian motion from 0 has no zero in (a, b)}."""
    return 2 / math.pi * math.asin(math.sqrt(a / b))


def _miss_two_intervals(I1, I2, m=1201, first_only=False):
    """P{BM from 0 avoids 0 on I1 and on I2}, by quadrature of the killed transition densities."""
    (a1, b1), (a2, b2) = I1, I2
    s = 7 * math.sqrt(b2)
    y = np.linspace(-s, s, m)
    dy = y[1] - y[0]
    pz = stats.norm.pdf(y, scale=math.sqrt(a1))
    u = b1 - a1
    # killed kernel on (a1, b1): same sign only
    Y, Z = np.meshgrid(y, y, indexing="ij")
    kill = (stats.norm.pdf(Y - Z, scale=math.sqrt(u)) - stats.norm.pdf(Y + Z, scale=math.sqrt(u))) * (Y * Z > 0)
    py = kill @ pz * dy
    if first_only:
        return float(py.sum() * dy)
    free = stats.norm.pdf(Y - Z, scale=math.sqrt(a2 - b1))
    pw = free @ py * dy
    miss2 = 1 - 2 * stats.norm.sf(np.abs(y) / math.sqrt(b2 - a2))
    return float(np.sum(pw * miss2) * dy)


def test_two_interval_oracle_sanity():
    I1, I2 = (0.25, 0.45), (0.7, 1.0)
    assert _miss_two_intervals(I1, I2, first_only=True) == pytest.approx(_no_zero(*I1), abs=1e-4)
    both = _miss_two_intervals(I1, I2)
    assert _no_zero(0.25, 1.0) < both < min(_no_zero(*I1), _no_zero(*I2))


def test_grid_floor_value():
    assert grid_floor(1024, 0.5) == pytest.approx(3 * 1024**-0.5 * math.sqrt(math.log(1024)))


def test_brownian_interval_bridge_matches_arcsine():
    exp = HittingExperiment(BM, TimeSet(0.25, 1.0), Target("point", [0.0]), [(128, 1e-12), (512, 1e-12)],
                            n_paths=6000, seed=1)
    est = estimate_hitting(exp)
    target = 1 - _no_zero(0.25, 1.0)
    for row in est.ladder:
        assert abs(row["p_hat"] - target) <= 4 * row["se"]
    assert est.flags["exact_bridge"]
    assert ladder_change(est.values()) < 0.02


def test_cantor_level_zero_and_one_match_oracles():
    tree = build_cantor_lambda(0.25, 4, l0=0.75, origin=0.25)
    exp = HittingExperiment(BM, TimeSet(tree=tree), Target("point", [0.0]), [(0, 1e-12), (1, 1e-12)],
                            n_paths=6000, seed=2)
    est = estimate_hitting(exp)
    lv0, lv1 = est.ladder
    assert abs(lv0["p_hat"] - (1 - _no_zero(0.25, 1.0))) <= 4 * lv0["se"]
    I1 = (0.25, 0.25 + 0.1875)
    I2 = (1.0 - 0.1875, 1.0)
    assert abs(lv1["p_hat"] - (1 - _miss_two_intervals(I1, I2))) <= 4 * lv1["se"]
    assert lv1["p_hat"] <= lv0["p_hat"]


def test_ladder_monotone_in_eps_same_paths():
    proc = ProcessSpec.fbm(0.7, 2)
    exp = HittingExperiment(proc, TimeSet(0.25, 1.0), Target("point", [0.2, 0.0]),
                            [(1024, 0.3), (1024, 0.2), (1024, 0.1)], n_paths=1500, seed=3)
    v = estimate_hitting(exp).values()
    assert v[0] >= v[1] >= v[2]


def test_monotone_in_target_and_time_set():
    proc = ProcessSpec.fbm(0.7, 2)
    base = dict(rungs=[(1024, 0.1)], n_paths=1500, seed=4)
    small = estimate_hitting(HittingExperiment(proc, TimeSet(0.5, 1.0), Target("ball", [0.3, 0.0], 0.1), **base))
    big_F = estimate_hitting(HittingExperiment(proc, TimeSet(0.5, 1.0), Target("ball", [0.3, 0.0], 0.2), **base))
    big_E = estimate_hitting(HittingExperiment(proc, TimeSet(0.25, 1.0), Target("ball", [0.3, 0.0], 0.1), **base))
    assert big_F.p_hat >= small.p_hat
    assert big_E.p_hat >= small.p_hat


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 1000), eps=st.floats(0.05, 0.5))
def test_ci_contains_estimate(seed, eps):
    proc = ProcessSpec.fbm(0.6, 2)
    est = estimate_hitting(HittingExperiment(proc, TimeSet(0.3, 1.0), Target("point", [0.1, 0.1]),
                                             [(64, max(eps, grid_floor(64, 0.6)))], n_paths=200, seed=seed))
    assert est.ci[0] <= est.p_hat <= est.ci[1]
    assert 0 <= est.ci[0] and est.ci[1] <= 1


def test_threads_do_not_change_result():
    mk = lambda th: HittingExperiment(BM, TimeSet(0.25, 1.0), Target("point", [0.3]), [(256, 1e-12)],  # noqa: E731
                                      n_paths=3000, seed=5, threads=th)
    assert estimate_hitting(mk(1)).to_dict() == estimate_hitting(mk(3)).to_dict()


def test_floor_error_and_subfloor_flag():
    proc = ProcessSpec.fbm(0.25)
    with pytest.raises(ValueError, match=r"3 \(1/n\)\^H sqrt\(log n\)"):
        estimate_hitting(HittingExperiment(proc, TimeSet(0.25, 1.0), Target("point", [0.0]), [(256, 0.01)], 10))
    est = estimate_hitting(HittingExperiment(proc, TimeSet(0.25, 1.0), Target("point", [0.0]), [(256, 0.01)], 10,
                                             allow_subfloor=True))
    assert est.flags["subfloor_rungs"] == [[256, 0.01]]


def test_input_errors():
    pt = Target("point", [0.0])
    with pytest.raises(ValueError, match="empty"):
        estimate_hitting(HittingExperiment(BM, TimeSet(0.3, 0.31), pt, [(8, 1e-12)], 10))
    with pytest.raises(ValueError, match="divide"):
        estimate_hitting(HittingExperiment(BM, TimeSet(0.25, 1.0), pt, [(96, 1e-12), (128, 1e-12)], 10))
    with pytest.raises(ValueError, match="positive"):
        HittingExperiment(BM, TimeSet(0.25, 1.0), pt, [(64, 0.0)], 10)
    with pytest.raises(ValueError, match="dimension"):
        HittingExperiment(ProcessSpec.fbm(0.5, 2), TimeSet(0.25, 1.0), pt, [(64, 0.1)], 10)
    with pytest.raises(ValueError):
        TimeSet(0.0, 1.0)
    tree = build_cantor_lambda(0.25, 3, l0=0.5, origin=0.25)
    with pytest.raises(ValueError, match="levels"):
        estimate_hitting(HittingExperiment(BM, TimeSet(tree=tree), pt, [(5, 1e-12)], 10))


def test_target_distances():
    cloud = Target("cloud", cloud=np.array([[0.0, 0.0], [1.0, 0.0]]))
    np.testing.assert_allclose(cloud.distance(np.array([[0.5, 0.0], [2.0, 0.0]])), [0.5, 1.0])
    ball = Target("ball", [0.0, 0.0], 0.5)
    np.testing.assert_allclose(ball.distance(np.array([[0.25, 0.0], [1.0, 0.0]])), [0.0, 0.5])


def test_drift_shifts_hitting():
    # a large constant-ish drift moves the path away from 0
    far = Drift.power(5.0, 0.05)
    est = estimate_hitting(HittingExperiment(BM, TimeSet(0.25, 1.0), Target("point", [0.0]), [(256, 1e-12)],
                                             n_paths=2000, seed=6, drift=far))
    assert est.p_hat < 0.05


def test_polarity_shallow_flag():
    rep = polarity_dichotomy(0.25, 2, K=4, n_paths=300, potential_evidence=False)
    assert rep["diagnostics"]["insufficient_depth"]
    assert rep["levels"] == [0, 2, 4]
    with pytest.raises(ValueError):
        polarity_dichotomy(0.6, 2, K=4, n_paths=10)


def test_kernel_expectation_constant_case():
    rep = kernel_expectation_check(0.5, SlowVarySpec.constant(1.0), 1, [0.5, 0.1, 0.01], n_paths=40000, seed=1)
    assert rep["agree_3sigma"]
    assert rep["bounded"]


def test_image_measure_interval_and_budget():
    rep = image_measure_estimate(BM, TimeSet(0.25, 1.0), 256, [0.1, 0.05], n_paths=20, seed=0)
    assert len(rep["mean_volume"]) == 2 and all(v > 0 for v in rep["mean_volume"])
    with pytest.raises(ValueError, match="budget"):
        image_measure_estimate(BM, TimeSet(0.25, 1.0), 256, [0.001], n_paths=2, budget=3)


def test_point_hitting_via_graph_brownian():
    exp = HittingExperiment(BM, TimeSet(0.25, 1.0), Target("point", [0.0]), [(256, 1e-12)], n_paths=1000, seed=7)
    rep = point_hitting_via_graph(exp, n_graph=64, tol=1e-4)
    assert rep["graph_capacity"]["capacity"] > 0
    assert rep["hitting"]["p_hat"] > 0.5


def test_sandwich_single_fixture():
    pts = np.array([[0.0]])
    fx = {"name": "interval-point", "E": TimeSet(0.25, 1.0), "F_cloud": PointCloud(pts, 0.05),
          "F": Target("point", [0.0]), "rungs": [(64, 1e-12), (256, 1e-12)], "n_time": 9}
    rows = sandwich_check([fx], 0.5, 1, n_paths=500, tol=1e-4)
    assert rows[0]["capacity_positive"] and rows[0]["p_positive"] and rows[0]["consistent"]


def test_ladder_helpers():
    assert ladder_ratios([1.0, 0.5, 0.25]) == [0.5, 0.5]
    assert math.isnan(ladder_ratios([0.0, 1.0])[0])
    assert ladder_change([2.0, 1.0]) == 0.5
    assert Thresholds().to_dict()["separation"] == 5.0
