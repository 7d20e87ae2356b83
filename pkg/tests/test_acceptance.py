"""Acceptance suite: one test per criterion, each run at its stated tolerance and time limit.

Every test records a ``Criterion N: PASS/FAIL`` line through the ``criterion``
fixture; the lines are repeated in the pytest terminal summary.  A criterion
that cannot be met is left failing rather than loosened.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from fbmhit.cli import main as hitlab
from fbmhit.gauss import ProcessSpec, empirical_covariance, simulate
from fbmhit.hitlab import (
    HittingExperiment,
    Target,
    TimeSet,
    estimate_hitting,
    kernel_expectation_check,
    ladder_change,
    ladder_ratios,
    polarity_dichotomy,
    sharpness_experiment,
)
from fbmhit.metric import MetricDescriptor, PointCloud, box_dimension
from fbmhit.potential import RadialKernel, WeightedMeasure, capacity, frostman_integral
from fbmhit.sets import ScalingProfile, ball_masses, build_cantor_lambda, build_e_phi, interval_cloud
from fbmhit.svf import SlowVarySpec, compute_c_alpha, delta_sq_quadrature


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_01_quadrature(criterion):
    with Timer() as tm:
        c = compute_c_alpha(0.5)
        rel = [abs(delta_sq_quadrature(0.5, SlowVarySpec.constant(1.0), h) - h) / h for h in (0.1, 0.5, 1.0)]
    ok = abs(c - 1) < 1e-8 and max(rel) < 1e-6 and tm.elapsed < 5
    assert criterion(1, ok, f"|c-1|={abs(c - 1):.2e}, max rel err {max(rel):.2e}, {tm.elapsed:.1f}s")


def test_criterion_02_fbm_simulation(criterion):
    worst = 0.0
    with Timer() as tm:
        for H in (0.25, 0.5, 0.75):
            ens = simulate(ProcessSpec.fbm(H), 1024, 20_000, seed=2)
            for k in range(1, 9):
                t = k / 8
                x2 = ens.paths[:, k * 128, 0] ** 2 / t ** (2 * H)
                worst = max(worst, abs(x2.mean() - 1) / (x2.std(ddof=1) / math.sqrt(x2.size)))
            m, se = empirical_covariance(ens, 0.5, 1.0)
            worst = max(worst, abs(m - 0.5) / se)
    ok = worst <= 4 and tm.elapsed < 60
    assert criterion(2, ok, f"max |z| = {worst:.2f}, {tm.elapsed:.1f}s")


def test_criterion_03_brownian_zero(criterion):
    oracle = 2 / math.pi * math.acos(0.5)
    with Timer() as tm:
        est = estimate_hitting(HittingExperiment(ProcessSpec.fbm(0.5), TimeSet(0.25, 1.0), Target("point", [0.0]),
                                                 [(1024, 1e-12)], n_paths=50_000, seed=3))
    ok = abs(est.p_hat - oracle) <= 0.02 and tm.elapsed < 120
    assert criterion(3, ok, f"p={est.p_hat:.4f} vs {oracle:.4f}, {tm.elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_04_polarity_trends(criterion):
    with Timer() as tm:
        low = estimate_hitting(HittingExperiment(
            ProcessSpec.fbm(0.25), TimeSet(0.25, 1.0), Target("point", [0.0]),
            [(1024, 0.02), (2048, 0.01), (4096, 0.005)], n_paths=10_000, seed=4, allow_subfloor=True))
        high = estimate_hitting(HittingExperiment(
            ProcessSpec.fbm(0.75, 2), TimeSet(0.25, 1.0), Target("point", [0.3, 0.0]),
            [(4096, 0.2), (4096, 0.1), (4096, 0.05), (4096, 0.025)], n_paths=10_000, seed=4))
    lv, hv = low.values(), high.values()
    ratios = ladder_ratios(hv)
    ok = lv[-1] > 0 and ladder_change(lv) <= 0.10 and all(r < 0.7 for r in ratios) and tm.elapsed < 600
    detail = (f"H=0.25: {[round(v, 4) for v in lv]}, change {ladder_change(lv):.3f}; "
              f"H=0.75 d=2 ratios {[round(r, 3) for r in ratios]}; {tm.elapsed:.0f}s")
    assert criterion(4, ok, detail)


@pytest.mark.slow
def test_criterion_05_critical_dichotomy(criterion):
    with Timer() as tm:
        rep = polarity_dichotomy(0.5, 1, beta=2.0, K=10, n_paths=20_000, seed=5)
    pot = rep["potential"]
    ok = (rep["separated"] and pot["capacity_stable"] and pot["hausdorff_decays"] and tm.elapsed < 900)
    detail = (f"p(E2)/p(E1)={rep['separation']:.1f}, cap change {pot['capacity_change']:.3f} (<=0.10), "
              f"Hausdorff shrink {pot['hausdorff_shrink']:.4f} (>=0.25), {tm.elapsed:.0f}s")
    assert criterion(5, ok, detail)


def _simplex_grid(n, step):
    m = int(round(1 / step))
    for comp in itertools.combinations(range(m + n - 1), n - 1):
        parts = np.diff(np.concatenate([[-1], comp, [m + n - 1]])) - 1
        yield parts / m


def _brute_energy(K):
    n = K.shape[0]
    step = {1: 1.0, 2: 0.02, 3: 0.02, 4: 0.04, 5: 0.05, 6: 0.1}[n]
    grid = np.array(list(_simplex_grid(n, step)))
    e = np.einsum("ij,jk,ik->i", grid, K, grid)
    res = minimize(lambda w: w @ K @ w, grid[np.argmin(e)], jac=lambda w: 2 * K @ w, method="SLSQP",
                   bounds=[(0, 1)] * n, constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}],
                   options={"ftol": 1e-14, "maxiter": 500})
    return min(float(res.fun), float(e.min()))


def test_criterion_06_capacity_oracle(criterion):
    worst = 0.0
    with Timer() as tm:
        for seed in range(25):
            rng = np.random.default_rng(seed)
            n, d = int(rng.integers(1, 7)), int(rng.integers(1, 3))
            cloud = PointCloud(rng.random((n, d)), 0.02, validate=False)
            k = RadialKernel.riesz(float(rng.uniform(0.2, 1.5)), r0=0.02)
            e = capacity(cloud, k, tol=1e-10).energy
            b = _brute_energy(k(cloud.distances()))
            worst = max(worst, abs(e - b) / b)
        two = capacity(PointCloud(np.array([[0.0], [0.5]]), 0.01), RadialKernel.riesz(0.5, r0=0.01), tol=1e-12)
        exact = 0.5 * 0.01**-0.5 + 0.5 * 0.5**-0.5
        two_err = abs(two.energy - exact) / exact
    ok = worst <= 1e-3 and two_err <= 1e-10 and tm.elapsed < 60
    assert criterion(6, ok, f"max rel {worst:.2e}, two-point {two_err:.1e}, {tm.elapsed:.1f}s")


def test_criterion_07_appendix_construction(criterion):
    with Timer() as tm:
        profile = ScalingProfile.log_minus(0.3, 2)
        l0, K = 0.1, 8
        tree = build_e_phi(profile, l0, K)
        exact_mass = all(np.all(tree.weights(k) == 2.0**-k) and tree.weights(k).size == 2**k for k in range(K + 1))
        gauge_err = max(abs(profile(tree.lengths[k]) / (profile(l0) * 2.0**-k) - 1) for k in range(K + 1))
        rng = np.random.default_rng(0)
        a = rng.choice(tree.leaf_midpoints(), 50)
        r = np.exp(rng.uniform(np.log(tree.lengths[K]), np.log(tree.lengths[1]), 50))
        w = tree.weights(K)
        band = []
        for ai, ri in zip(a, r):
            m = ball_masses(tree.leaf_lefts, tree.leaf_length, w, np.array([ai]), float(ri))[0]
            band.append(m / (profile(ri) / profile(l0)))
    ok = exact_mass and gauge_err <= 1e-12 and 0.5 <= min(band) and max(band) <= 6 and tm.elapsed < 10
    assert criterion(7, ok, f"masses exact={exact_mass}, gauge err {gauge_err:.1e}, "
                            f"band [{min(band):.2f}, {max(band):.2f}], {tm.elapsed:.1f}s")


def test_criterion_08_dimension(criterion):
    with Timer() as tm:
        s1 = box_dimension(interval_cloud(0, 1, 10001), np.geomspace(1e-3, 0.05, 8)).slope
        cloud = build_cantor_lambda(1 / 3, 10).leaf_cloud()
        s2 = box_dimension(cloud, np.geomspace(cloud.resolution * 2, 0.1, 10)).slope
        half = interval_cloud(0, 1, 100001, MetricDescriptor.power_time(0.5))
        s3 = box_dimension(half, np.geomspace(0.005, 0.2, 8)).slope
    ok = abs(s1 - 1) <= 0.05 and abs(s2 - 0.631) <= 0.05 and abs(s3 - 2) <= 0.1 and tm.elapsed < 30
    assert criterion(8, ok, f"slopes {s1:.3f}, {s2:.3f}, {s3:.3f}, {tm.elapsed:.1f}s")


def test_criterion_09_frostman(criterion):
    with Timer() as tm:
        cloud = interval_cloud(0, 1, 2001)
        mu = WeightedMeasure.uniform(cloud)
        rs = np.geomspace(cloud.resolution, 0.05, 8)
        bands = {}
        for name, theta, norm in (("bounded", 0.25, lambda r: 1.0),
                                  ("log", 1.0, lambda r: 1 / math.log(math.e / r)),
                                  ("power", 1.5, lambda r: r**0.5)):
            vals = [frostman_integral(mu, theta, r) * norm(r) for r in rs]
            bands[name] = max(vals) / min(vals)
    ok = all(b < 3 for b in bands.values()) and tm.elapsed < 30
    assert criterion(9, ok, ", ".join(f"{k} band {v:.2f}" for k, v in bands.items()) + f", {tm.elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_10_sharpness(criterion):
    with Timer() as tm:
        rep = sharpness_experiment(0.5, 1, 0.0, SlowVarySpec.log_power(1.0), K=10, n_paths=20_000)
    main = rep["main"]
    h = main["hausdorff"]["values"]
    shrink = [1 - b / a for a, b in zip(h, h[1:])]
    ok = (all(s >= 0.20 for s in shrink) and main["checks"]["capacity_stable"]
          and main["checks"]["hitting_positive_stable"] and not rep["control_separated"] and tm.elapsed < 1200)
    detail = (f"Hausdorff shrink {[round(s, 3) for s in shrink]} (>=0.20), "
              f"capacity change {main['capacity']['change_last']:.3f} (<=0.15), "
              f"stable drifts {main['fraction_drifts_stable']:.2f}, control separated {rep['control_separated']}, "
              f"{tm.elapsed:.0f}s")
    assert criterion(10, ok, detail)


def test_criterion_11_kernel_expectation(criterion):
    with Timer() as tm:
        reps = [kernel_expectation_check(0.5, SlowVarySpec.constant(1.0), 1, [0.25, 0.1, 0.03, 0.01, 0.003], seed=11),
                kernel_expectation_check(0.4, SlowVarySpec.log_power(1.0), 2, [0.25, 0.1, 0.03, 0.01, 0.003], seed=11)]
    zmax = max(abs(r["z"]) for rep in reps for r in rep["rows"])
    ok = all(rep["agree_3sigma"] and rep["band"] < 3 for rep in reps) and tm.elapsed < 300
    assert criterion(11, ok, f"max |z| {zmax:.2f}, bands {[round(r['band'], 3) for r in reps]}, {tm.elapsed:.1f}s")


def test_criterion_12_reproducibility(criterion, tmp_path):
    configs = {
        "hitting": {"schema_version": 1, "experiment": "hitting", "seed": 12, "n_paths": 3000,
                    "rungs": [[256, 1e-12], [1024, 1e-12]]},
        "simulate": {"schema_version": 1, "experiment": "simulate", "seed": 12, "n": 256, "n_paths": 2000,
                     "process": {"kind": "mixed", "H": 0.6, "alpha": 0.5, "d": 1,
                                 "slow": {"family": "log_power", "beta": 1.0}}},
        "polarity": {"schema_version": 1, "experiment": "polarity", "seed": 12, "H": 0.5, "d": 1, "K": 6,
                     "n_paths": 1000},
        "kernel-check": {"schema_version": 1, "experiment": "kernel-check", "seed": 12, "n_paths": 20000},
    }
    same = {}
    for name, cfg in configs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for run in range(2):
            out = tmp_path / f"{name}-{run}"
            hitlab([name, "--config", str(path), "--out", str(out)])
            outs.append((out / "report.json").read_bytes())
        same[name] = outs[0] == outs[1]
    assert criterion(12, all(same.values()), ", ".join(f"{k} identical={v}" for k, v in same.items()))
