import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from exclusim import oracle, stats
from exclusim.dynamics import SimConfig, run_ensemble
from exclusim.errors import DegenerateWindow, InsufficientReplicas, ParameterMismatch
from exclusim.lattice import Torus, uniform_kernel

NN = uniform_kernel(1, 1)
PARAMS = {"d": 1, "L": 6, "R": 1, "kernel": [[[-1], 0.5], [[1], 0.5]], "rho": 0.5}


def synthetic(X, times=None, params=PARAMS, A=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    n, S, d = X.shape
    times = np.arange(S, dtype=float) if times is None else np.asarray(times, dtype=float)
    A = np.zeros_like(X) if A is None else A
    return stats.Ensemble(times, X, A, np.zeros((n, S, 2), dtype=np.int64),
                          np.arange(n, dtype=np.uint64), np.arange(n), dict(params))


def test_jackknife_matches_brute_force():
    x = np.random.default_rng(0).standard_normal((40, 3))
    var, se = stats.jackknife_variance(x)
    loo = np.array([np.var(np.delete(x, i, axis=0), axis=0, ddof=1) for i in range(40)])
    brute = np.sqrt(39 / 40 * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    assert np.allclose(var, x.var(axis=0, ddof=1)) and np.allclose(se, brute)
    with pytest.raises(InsufficientReplicas):
        stats.jackknife_variance(x[:2])


def test_drift_on_frozen_walkers():
    rep = stats.drift_test(synthetic(np.zeros((50, 4))), [1.0])
    assert rep.mean == 0.0 and rep.passed


def test_drift_needs_thirty_replicas():
    with pytest.raises(InsufficientReplicas):
        stats.drift_test(synthetic(np.zeros((29, 4))), [1.0])


@given(arrays(np.int64, (40, 3), elements=st.integers(-50, 50)))
def test_drift_is_odd(X):
    ens = synthetic(X, times=[0.0, 1.0, 2.0])
    a = stats.drift_test(ens, [1.0])
    b = stats.drift_test(ens.negated(), [1.0])
    assert b.mean == -a.mean and b.se == a.se


@given(arrays(np.int64, (35, 4), elements=st.integers(-20, 20)), st.randoms())
def test_msd_is_permutation_invariant(X, rnd):
    order = list(range(35))
    rnd.shuffle(order)
    a = stats.msd_curve(synthetic(X), [1.0])
    b = stats.msd_curve(synthetic(X).take(order), [1.0])
    assert np.allclose(a.variance, b.variance, rtol=1e-12, atol=1e-12)
    assert np.allclose(a.se, b.se, rtol=1e-9, atol=1e-12)


def test_free_walk_msd_tracks_two_t():
    cfg = SimConfig(Torus(16, 1), NN, 1.0, 16.0)
    ens = stats.Ensemble.from_trajectories(run_ensemble(cfg, 1000, master_seed=4))
    curve = stats.msd_curve(ens, [1.0])
    assert np.all(np.abs(curve.variance - 2 * curve.times) <= 3 * curve.se + 1e-12)
    assert stats.drift_test(ens, [1.0]).passed


def test_empty_msd_is_zero():
    cfg = SimConfig(Torus(16, 1), NN, 0.0, 16.0)
    ens = stats.Ensemble.from_trajectories(run_ensemble(cfg, 40, master_seed=4))
    assert not stats.msd_curve(ens, [1.0]).variance.any()


@given(st.floats(0.1, 2.0), st.floats(0.01, 100.0))
def test_scaling_fit_exact_power_law(alpha, c):
    t = 2.0 ** np.arange(0, 12)
    curve = stats.MsdCurve(t, c * t ** alpha, np.zeros_like(t), 100)
    rep = stats.scaling_fit(curve, (1.0, 2048.0))
    assert abs(rep.slope - alpha) < 1e-10


def test_scaling_fit_linear_input():
    t = np.array([0.0, 1, 2, 4, 8, 16, 32])
    rep = stats.scaling_fit(stats.MsdCurve(t, 2 * t, np.zeros_like(t), 100), (1.0, 32.0))
    assert rep.slope == pytest.approx(1.0, abs=1e-12) and rep.within(0.9, 1.1)


def test_scaling_fit_degenerate_window():
    t = 2.0 ** np.arange(6)
    curve = stats.MsdCurve(t, t, np.zeros_like(t), 100)
    with pytest.raises(DegenerateWindow):
        stats.scaling_fit(curve, (4.0, 32.0))
    with pytest.raises(DegenerateWindow):
        stats.scaling_fit(stats.MsdCurve(t, 0 * t, t, 100), (1.0, 32.0))


def test_gaussianity_detects_normal_and_exponential():
    rng = np.random.default_rng(3)
    assert stats.gaussianity_from_sample(rng.standard_normal(2000), 1.0).passed
    rep = stats.gaussianity_from_sample(rng.exponential(size=2000), 1.0)
    assert not rep.cdf_passed and not rep.kurtosis_passed
    assert 0.0 <= rep.statistic <= 1.0


def test_gaussianity_threshold_is_one_percent_lilliefors():
    # 1% Lilliefors critical value ~ 1.035 / sqrt(n) for large n
    rep = stats.gaussianity_from_sample(np.random.default_rng(1).standard_normal(500), 1.0)
    assert rep.threshold == pytest.approx(1.035 / math.sqrt(500), rel=0.08)


def test_gaussianity_false_alarm_rate():
    rng = np.random.default_rng(8)
    failures = sum(not stats.gaussianity_from_sample(rng.standard_normal(300)).cdf_passed for _ in range(400))
    assert failures <= 12     # expected 4


def test_gaussianity_needs_replicas():
    with pytest.raises(InsufficientReplicas):
        stats.gaussianity_from_sample(np.zeros(100))


def test_kurtosis_se_large_n():
    assert stats.kurtosis_se(10 ** 6) == pytest.approx(math.sqrt(24 / 10 ** 6), rel=1e-3)


def test_gaussianity_of_free_walk():
    cfg = SimConfig(Torus(32, 1), NN, 1.0, 1000.0)
    ens = stats.Ensemble.from_trajectories(run_ensemble(cfg, 1000, master_seed=12))
    rep = stats.gaussianity_test(ens, [1.0], 1000.0)
    assert rep.passed and rep.lattice and not math.isnan(rep.increment_corr)
    assert rep.epsilon == pytest.approx(1 / math.sqrt(1000.0))


def test_martingale_test_on_synthetic_walk():
    rng = np.random.default_rng(2)
    X = np.cumsum(rng.choice([-1, 1], size=(2000, 64)), axis=1)
    ens = synthetic(np.concatenate([np.zeros((2000, 1)), X], axis=1), times=np.arange(65.0))
    rep = stats.martingale_test(ens, [1.0], 1.0, 1.0)
    assert rep.passed
    assert not stats.martingale_test(ens, [1.0], 0.5, 1.0).variance_passed


def test_compare_oracle_free_walk():
    G = oracle.build_generator(Torus(6, 1), NN, "ew")
    nu = oracle.bernoulli_measure(G.space, 1.0)
    ext = oracle.variance_extrapolate([1.0], oracle.geometric_lambdas(5), G, nu)
    t = np.array([0.0, 1.0, 2.0])
    curve = stats.MsdCurve(t, 2 * t, np.full(3, 0.01), 1000, {**PARAMS, "rho": 1.0})
    cmp = stats.compare_oracle(curve, ext, 2.0)
    assert cmp.passed and cmp.discrepancy < 1e-10


def test_compare_oracle_empty():
    G = oracle.build_generator(Torus(6, 1), NN, "ew")
    nu = oracle.bernoulli_measure(G.space, 0.0)
    ext = oracle.variance_extrapolate([1.0], oracle.geometric_lambdas(5), G, nu)
    t = np.array([0.0, 1.0])
    curve = stats.MsdCurve(t, 0 * t, 0 * t, 100, {**PARAMS, "rho": 0.0})
    cmp = stats.compare_oracle(curve, ext, 1.0)
    assert cmp.passed and cmp.discrepancy == 0.0


def test_compare_oracle_parameter_mismatch():
    G = oracle.build_generator(Torus(6, 1), NN, "ew")
    ext = oracle.variance_extrapolate([1.0], [1.0], G, oracle.bernoulli_measure(G.space, 0.5))
    curve = stats.MsdCurve(np.array([0.0, 1.0]), np.zeros(2), np.zeros(2), 100, {**PARAMS, "rho": 0.3})
    with pytest.raises(ParameterMismatch, match="rho"):
        stats.compare_oracle(curve, ext, 1.0)


def test_ensemble_rejects_mixed_parameters():
    a = run_ensemble(SimConfig(Torus(8, 1), NN, 0.3, 2.0), 2, master_seed=1)
    b = run_ensemble(SimConfig(Torus(8, 1), NN, 0.5, 2.0), 2, master_seed=1)
    with pytest.raises(ParameterMismatch, match="rho"):
        stats.Ensemble.from_trajectories(a + b)
    ens = stats.Ensemble.from_trajectories(a)
    assert ens.n == 2 and ens.X.shape == (2, len(ens.times), 1)


def test_records_are_uniform():
    rep = stats.drift_test(synthetic(np.zeros((50, 4))), [1.0])
    (rec,) = rep.records()
    assert rec.test == "drift" and rec.passed
