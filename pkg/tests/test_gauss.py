"""Tests for fbmhit.gauss: covariance, streams, drifts, modulus and cache."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fbmhit.gauss import (
    Drift,
    ProcessSpec,
    SimulationError,
    empirical_covariance,
    fbm_covariance,
    freeze_drift,
    read_cache,
    sample_at_times,
    simulate,
    spectral_oracle,
    validate_modulus,
    write_cache,
)
from fbmhit.svf import SlowVarySpec, IncrementVariance


def _within(value, se, target, k=4.0):
    return abs(value - target) <= k * se


@pytest.mark.parametrize("H", [0.5, 0.75, 0.25])
def test_fbm_covariance_half_one(H):
    ens = simulate(ProcessSpec.fbm(H), 256, 8000, seed=11)
    m, se = empirical_covariance(ens, 0.5, 1.0)
    target = float(fbm_covariance(H, np.array([0.5]), np.array([1.0]))[0, 0])
    assert _within(m, se, target)
    v, se = empirical_covariance(ens, 1.0, 1.0)
    assert _within(v, se, 1.0)


def test_closed_form_fbm_covariance():
    # R(1/2, 1) = (1/2)(1 + 2^{-2H} - 2^{-2H}) = 1/2 for every H
    for H in (0.2, 0.5, 0.75, 0.9):
        assert fbm_covariance(H, np.array([0.5]), np.array([1.0]))[0, 0] == pytest.approx(0.5)


def test_brownian_covariance_min():
    ens = simulate(ProcessSpec.fbm(0.5), 64, 8000, seed=2)
    m, se = empirical_covariance(ens, 0.25, 0.75)
    assert _within(m, se, 0.25)


def test_mixed_variance_adds():
    spec = ProcessSpec.mixed(0.5, 0.5, SlowVarySpec.constant(1.0))
    ens = simulate(spec, 128, 8000, seed=5)
    v, se = empirical_covariance(ens, 1.0, 1.0)
    assert _within(v, se, 2.0)
    assert float(spec.variance(1.0)) == pytest.approx(2.0)


@pytest.mark.parametrize("k", [4, 6])
def test_delta_theta_constant_increments(k):
    spec = ProcessSpec.delta_theta(0.5, SlowVarySpec.constant(1.0))
    ens = simulate(spec, 256, 4000, seed=7)
    h = 2.0**-k
    lag = int(h * 256)
    inc = ens.paths[:, 100 + lag, 0] - ens.paths[:, 100, 0]
    sq = inc**2
    assert _within(sq.mean(), sq.std(ddof=1) / np.sqrt(sq.size), h)


def test_delta_theta_log_power_increments():
    slow = SlowVarySpec.log_power(1.0)
    spec = ProcessSpec.delta_theta(0.4, slow)
    ens = simulate(spec, 128, 6000, seed=8)
    var = IncrementVariance(0.4, slow)
    for lag in (1, 8, 32):
        sq = (ens.paths[:, 40 + lag, 0] - ens.paths[:, 40, 0]) ** 2
        assert _within(sq.mean(), sq.std(ddof=1) / np.sqrt(sq.size), float(var(lag / 128)))


def test_increments_stationary_ks():
    ens = simulate(ProcessSpec.fbm(0.7), 256, 3000, seed=13)
    a = ens.paths[:, 10, 0] - ens.paths[:, 2, 0]
    b = ens.paths[:, 250, 0] - ens.paths[:, 242, 0]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_components_uncorrelated():
    ens = simulate(ProcessSpec.fbm(0.6, d=2), 64, 8000, seed=17)
    prod = ens.paths[:, -1, 0] * ens.paths[:, -1, 1]
    assert _within(prod.mean(), prod.std(ddof=1) / np.sqrt(prod.size), 0.0)


def test_paths_start_at_zero():
    for spec in (ProcessSpec.fbm(0.3), ProcessSpec.delta_theta(0.5, SlowVarySpec.constant(1.0))):
        ens = simulate(spec, 32, 10, seed=0)
        assert np.all(ens.paths[:, 0, :] == 0.0)


def test_chunking_invariance():
    spec = ProcessSpec.fbm(0.75)
    full = simulate(spec, 64, 2100, seed=3).paths
    tail = simulate(spec, 64, 100, seed=3, path_offset=2000).paths
    np.testing.assert_array_equal(full[2000:], tail)


def test_sample_at_times_matches_grid_for_brownian_distribution():
    times = np.array([0.1, 0.4, 1.0])
    x = sample_at_times(ProcessSpec.fbm(0.5), times, 8000, seed=1)
    cov = np.cov(x[:, :, 0].T)
    np.testing.assert_allclose(cov, np.minimum.outer(times, times), atol=0.05)


def test_sample_at_times_rejects_bad_times():
    with pytest.raises(ValueError):
        sample_at_times(ProcessSpec.fbm(0.5), [0.5, 0.4], 2, seed=0)


def test_seed_changes_paths():
    spec = ProcessSpec.fbm(0.5)
    a = simulate(spec, 16, 4, seed=1).paths
    b = simulate(spec, 16, 4, seed=2).paths
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, simulate(spec, 16, 4, seed=1).paths)


def test_off_grid_covariance_raises():
    ens = simulate(ProcessSpec.fbm(0.5), 8, 10, seed=0)
    with pytest.raises(ValueError, match="not on the simulation grid"):
        empirical_covariance(ens, 0.3, 1.0)


def test_non_power_of_two_refused():
    with pytest.raises(ValueError, match="power of two"):
        simulate(ProcessSpec.fbm(0.7), 100, 1, seed=0)


def test_jitter_failure_message():
    from fbmhit.gauss import _cholesky_with_jitter

    R = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(SimulationError, match="jitter budget"):
        _cholesky_with_jitter(R)


def test_freeze_drift_deterministic():
    spec = ProcessSpec.delta_theta(0.5, SlowVarySpec.log_power(1.0))
    a = freeze_drift(spec, 64, seed=4)
    b = freeze_drift(spec, 64, seed=4)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(a.values[0] == 0.0)
    times = np.array([0.1, 0.2, 0.7])
    c = freeze_drift(spec, 0, seed=4, times=times)
    assert c.t[0] == 0.0 and np.all(c.values[0] == 0.0)
    np.testing.assert_allclose(c(times), c.values[1:])
    with pytest.raises(ValueError):
        freeze_drift(ProcessSpec.fbm(0.5), 64, seed=0)


def test_drift_fixtures():
    z = Drift.zero(2)
    assert z(np.array([0.3])).shape == (1, 2)
    p = Drift.power(2.0, 0.5)
    assert p(np.array([0.25]))[0, 0] == pytest.approx(1.0, rel=1e-3)


def test_modulus_validation_stable_under_refinement():
    spec = ProcessSpec.delta_theta(0.5, SlowVarySpec.log_power(1.0))
    q = []
    for n in (256, 512):
        rep = validate_modulus(simulate(spec, n, 200, seed=9), 0.5, spec.slow)
        q.append(rep["quantiles"]["99"])
    assert abs(q[1] - q[0]) / q[0] < 0.2
    assert rep["power_modulus_quantiles"]["99"] > rep["quantiles"]["99"]


def test_power_modulus_quantile_grows():
    spec = ProcessSpec.delta_theta(0.5, SlowVarySpec.log_power(1.0))
    qs = [validate_modulus(simulate(spec, n, 100, seed=9), 0.5, spec.slow)["power_modulus_quantiles"]["50"]
          for n in (64, 1024)]
    assert qs[1] > qs[0]


def test_spectral_oracle_agrees_with_cholesky():
    slow = SlowVarySpec.constant(1.0)
    times = np.array([0.25, 0.5])
    x = spectral_oracle(0.5, slow, times, 8000, seed=1)
    var = IncrementVariance(0.5, slow)
    emp = x.var(axis=0)
    np.testing.assert_allclose(emp, var(times), rtol=0.06)


def test_cache_roundtrip(tmp_path):
    spec = ProcessSpec.fbm(0.6, d=2)
    ens = simulate(spec, 16, 5, seed=21)
    f = tmp_path / "paths.bin"
    write_cache(ens, f)
    back = read_cache(f, spec)
    np.testing.assert_array_equal(back.paths, ens.paths)
    np.testing.assert_array_equal(back.t, ens.t)
    assert back.seed == 21
    with pytest.raises(ValueError, match="different process"):
        read_cache(f, ProcessSpec.fbm(0.5, d=2))


def test_csv_export(tmp_path):
    ens = simulate(ProcessSpec.fbm(0.5), 4, 2, seed=0)
    f = tmp_path / "p.csv"
    ens.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "path,t,component,value"
    assert len(lines) == 1 + 2 * 5


def test_spec_roundtrip_and_validation():
    spec = ProcessSpec.mixed(0.3, 0.4, SlowVarySpec.log_power(2.0), d=3)
    assert ProcessSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        ProcessSpec.fbm(1.2)


@settings(max_examples=15, deadline=None)
@given(H=st.floats(0.05, 0.95), n=st.sampled_from([8, 16, 32]))
def test_fbm_covariance_psd(H, n):
    t = np.arange(1, n + 1) / n
    R = fbm_covariance(H, t, t)
    assert np.linalg.eigvalsh(R).min() > -1e-10


def test_criterion_two_grid_covariance():
    """20000 paths, eight times: covariance within 4 standard errors."""
    H = 0.75
    ens = simulate(ProcessSpec.fbm(H), 8, 20000, seed=2024)
    t = ens.t[1:]
    for i, s in enumerate(t):
        for u in t[i:]:
            m, se = empirical_covariance(ens, s, u)
            target = float(fbm_covariance(H, np.array([s]), np.array([u]))[0, 0])
            assert _within(m, se, target)
