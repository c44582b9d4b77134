"""Ensemble statistics: drift, variance curves, scaling exponents,
Gaussianity and Monte Carlo versus exact-oracle comparison.

Statistical verdicts use three standard errors; variance error bars come
from the leave-one-replica-out jackknife.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np
import scipy.stats
from statsmodels.stats._lilliefors import lilliefors_table_norm

from .errors import DegenerateWindow, InsufficientReplicas, ParameterMismatch
from .report import Record

N_SIGMA = 3.0
ORACLE_REL_TOL = 0.01
GAUSS_ALPHA = 0.01
MIN_GAUSS_VARIANCE = 100.0
ORACLE_KEYS = ("d", "L", "R", "kernel", "rho")


@dataclass
class Ensemble:
    """Replicas sharing one parameter set and sample schedule.

    ``X`` and ``A`` have shape (replicas, samples, d); ``J`` (replicas, samples, m).
    """

    times: np.ndarray
    X: np.ndarray
    A: np.ndarray
    J: np.ndarray
    seeds: np.ndarray
    replicas: np.ndarray
    params: dict = field(default_factory=dict)

    @classmethod
    def from_trajectories(cls, trajectories: Sequence) -> Ensemble:
        if not trajectories:
            raise InsufficientReplicas("empty ensemble")
        first = trajectories[0]
        params = first.config.params()
        for tr in trajectories[1:]:
            other = tr.config.params()
            if other != params:
                diff = sorted(k for k in params if params[k] != other.get(k))
                raise ParameterMismatch(f"trajectories disagree on {', '.join(diff)}")
        return cls(
            times=np.asarray(first.times, dtype=float),
            X=np.stack([tr.X for tr in trajectories]),
            A=np.stack([tr.A for tr in trajectories]),
            J=np.stack([tr.J for tr in trajectories]),
            seeds=np.array([tr.seed for tr in trajectories], dtype=np.uint64),
            replicas=np.array([tr.replica for tr in trajectories], dtype=np.int64),
            params=params,
        )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[2]

    def index(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise KeyError(f"time {t} not in sample schedule")
        return int(hits[0])

    def project(self, direction, martingale: bool = False) -> np.ndarray:
        """``X . l`` (or ``(X - A) . l``) with shape (replicas, samples)."""
        l = np.asarray(direction, dtype=float).reshape(self.d)
        values = self.X - self.A if martingale else self.X
        return values @ l

    def take(self, rows) -> Ensemble:
        rows = np.asarray(rows)
        return Ensemble(self.times, self.X[rows], self.A[rows], self.J[rows],
                        self.seeds[rows], self.replicas[rows], dict(self.params))

    def negated(self) -> Ensemble:
        return Ensemble(self.times, -self.X, -self.A, self.J, self.seeds, self.replicas, dict(self.params))


def _require(n: int, minimum: int, what: str):
    if n < minimum:
        raise InsufficientReplicas(f"{what} needs at least {minimum} replicas, got {n}")


def jackknife_variance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased sample variance along axis 0 and its jackknife standard error."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 3:
        raise InsufficientReplicas(f"jackknife needs at least 3 replicas, got {n}")
    var = np.var(x, axis=0, ddof=1)
    s1 = x.sum(axis=0)
    s2 = (x ** 2).sum(axis=0)
    loo = (s2 - x ** 2 - (s1 - x) ** 2 / (n - 1)) / (n - 2)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return var, se


@dataclass(frozen=True)
class DriftTest:
    mean: float
    se: float
    n: int
    T: float
    passed: bool

    def records(self) -> list[Record]:
        return [Record("drift", "mean X_T.l/T", self.mean, 0.0, N_SIGMA * self.se, self.passed)]


def drift_test(ens: Ensemble, direction, t: float | None = None) -> DriftTest:
    _require(ens.n, 30, "drift_test")
    i = len(ens.times) - 1 if t is None else ens.index(t)
    T = float(ens.times[i])
    v = ens.project(direction)[:, i] / T
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(ens.n))
    return DriftTest(mean, se, ens.n, T, abs(mean) <= N_SIGMA * se)


@dataclass
class MsdCurve:
    times: np.ndarray
    variance: np.ndarray
    se: np.ndarray
    n: int
    params: dict = field(default_factory=dict)

    def at(self, t: float) -> tuple[float, float]:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise KeyError(f"time {t} not in curve")
        return float(self.variance[hits[0]]), float(self.se[hits[0]])


def msd_curve(ens: Ensemble, direction, martingale: bool = False) -> MsdCurve:
    """Per-sample-time ``Var(X_t . l)`` with jackknife errors."""
    _require(ens.n, 30, "msd_curve")
    var, se = jackknife_variance(ens.project(direction, martingale))
    return MsdCurve(ens.times.copy(), var, se, ens.n, dict(ens.params))


@dataclass(frozen=True)
class ScalingReport:
    window: tuple[float, float]
    slope: float
    slope_se: float
    intercept: float
    times: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def scaling_fit(curve: MsdCurve, window: tuple[float, float]) -> ScalingReport:
    """Least-squares slope of ``log Var`` against ``log t`` inside ``window``."""
    lo, hi = window
    sel = (curve.times >= lo) & (curve.times <= hi) & (curve.times > 0)
    if sel.sum() < 5:
        raise DegenerateWindow(f"window [{lo}, {hi}] holds {int(sel.sum())} sample times, need 5")
    v = curve.variance[sel]
    if np.any(v <= 0):
        raise DegenerateWindow("nonpositive variance inside the fit window")
    fit = scipy.stats.linregress(np.log(curve.times[sel]), np.log(v))
    return ScalingReport((float(lo), float(hi)), float(fit.slope), float(fit.stderr), float(fit.intercept),
                         curve.times[sel].copy(), v.copy(), curve.se[sel].copy())


@dataclass(frozen=True)
class GaussianityReport:
    t: float
    epsilon: float
    n: int
    variance: float
    statistic: float
    threshold: float
    kurtosis: float
    kurtosis_se: float
    increment_corr: float = math.nan
    increment_corr_tol: float = math.nan
    lattice: bool = False

    @property
    def cdf_passed(self) -> bool:
        return self.statistic < self.threshold

    @property
    def kurtosis_passed(self) -> bool:
        return abs(self.kurtosis) <= N_SIGMA * self.kurtosis_se

    @property
    def spread_passed(self) -> bool:
        # integer-valued samples need Var >= 100 before the CDF distance is meaningful
        return not self.lattice or self.variance >= MIN_GAUSS_VARIANCE

    @property
    def increments_passed(self) -> bool:
        return math.isnan(self.increment_corr) or abs(self.increment_corr) <= self.increment_corr_tol

    @property
    def passed(self) -> bool:
        return self.cdf_passed and self.kurtosis_passed and self.spread_passed and self.increments_passed

    def records(self) -> list[Record]:
        out = [
            Record("gaussianity", "sup |F_n - Phi|", self.statistic, 0.0, self.threshold, self.cdf_passed),
            Record("gaussianity", "excess kurtosis", self.kurtosis, 0.0, N_SIGMA * self.kurtosis_se,
                    self.kurtosis_passed),
            Record("gaussianity", "variance", self.variance, MIN_GAUSS_VARIANCE, 0.0, self.spread_passed),
        ]
        if not math.isnan(self.increment_corr):
            out.append(Record("gaussianity", "corr(X_t/2, X_t - X_t/2)", self.increment_corr, 0.0,
                               self.increment_corr_tol, self.increments_passed))
        return out


def kurtosis_se(n: int) -> float:
    return math.sqrt(24.0 * n * (n - 1) ** 2 / ((n - 3) * (n - 2) * (n + 3) * (n + 5)))


def gaussianity_from_sample(sample, t: float = math.nan) -> GaussianityReport:
    """Lilliefors-type sup distance (mean and variance estimated) plus excess kurtosis."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    _require(n, 200, "gaussianity test")
    var = float(x.var(ddof=1))
    z = (x - x.mean()) / math.sqrt(var) if var > 0 else np.zeros_like(x)
    z.sort()
    cdf = scipy.stats.norm.cdf(z)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    statistic = float(max(upper.max(), lower.max()))
    threshold = float(lilliefors_table_norm.crit(GAUSS_ALPHA, n))
    kurt = float(scipy.stats.kurtosis(x, fisher=True, bias=False)) if var > 0 else math.nan
    eps = 1.0 / math.sqrt(t) if t > 0 else math.nan
    return GaussianityReport(t, eps, n, var, statistic, threshold, kurt, kurtosis_se(n))


def gaussianity_test(ens: Ensemble, direction, t: float) -> GaussianityReport:
    """Marginal of ``X_t . l`` (i.e. ``eps X_{t/eps^2}`` at unit macroscopic time,
    ``eps = t^{-1/2}``) plus an uncorrelated-increments check against ``t/2``."""
    _require(ens.n, 200, "gaussianity test")
    proj = ens.project(direction)
    i = ens.index(t)
    report = gaussianity_from_sample(proj[:, i], t)
    report = GaussianityReport(**{**report.__dict__, "lattice": True})
    try:
        h = ens.index(t / 2)
    except KeyError:
        return report
    first, second = proj[:, h], proj[:, i] - proj[:, h]
    if first.std() == 0 or second.std() == 0:
        return report
    r = float(np.corrcoef(first, second)[0, 1])
    return GaussianityReport(**{**report.__dict__, "increment_corr": r,
                                "increment_corr_tol": N_SIGMA / math.sqrt(ens.n), "lattice": True})


@dataclass(frozen=True)
class MartingaleTest:
    T: float
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    expected_variance: float

    @property
    def mean_passed(self) -> bool:
        return abs(self.mean) <= N_SIGMA * self.mean_se

    @property
    def variance_passed(self) -> bool:
        return abs(self.variance - self.expected_variance) <= N_SIGMA * self.variance_se

    @property
    def passed(self) -> bool:
        return self.mean_passed and self.variance_passed

    def records(self) -> list[Record]:
        return [
            Record("martingale", "mean (X_T - A_T).l", self.mean, 0.0, N_SIGMA * self.mean_se, self.mean_passed),
            Record("martingale", "Var (X_T - A_T).l", self.variance, self.expected_variance,
                    N_SIGMA * self.variance_se, self.variance_passed),
        ]


def martingale_test(ens: Ensemble, direction, bond_mean: float, second_moment: float) -> MartingaleTest:
    """Compare ``(X_T - A_T) . l`` with a mean-zero martingale of variance
    ``T * bond_mean * sum_y (y.l)^2``; ``bond_mean`` is ``E[c_{0,y}] = rho^2``."""
    _require(ens.n, 30, "martingale test")
    i = len(ens.times) - 1
    T = float(ens.times[i])
    m = ens.project(direction, martingale=True)[:, i]
    var, se = jackknife_variance(m)
    return MartingaleTest(T, float(m.mean()), float(m.std(ddof=1) / math.sqrt(ens.n)),
                          float(var), float(se), T * bond_mean * second_moment)


@dataclass(frozen=True)
class OracleComparison:
    t: float
    mc_rate: float
    mc_se: float
    oracle_rate: float
    tolerance: float

    @property
    def discrepancy(self) -> float:
        if self.oracle_rate == 0:
            return 0.0 if self.mc_rate == 0 else math.inf
        return abs(self.mc_rate - self.oracle_rate) / abs(self.oracle_rate)

    @property
    def passed(self) -> bool:
        return abs(self.mc_rate - self.oracle_rate) <= self.tolerance

    def records(self) -> list[Record]:
        return [Record("oracle", f"Var(X_t.l)/t at t={self.t!r}", self.mc_rate, self.oracle_rate,
                        self.tolerance, self.passed)]


def compare_oracle(curve: MsdCurve, oracle, t: float) -> OracleComparison:
    """Monte Carlo ``Var(X_t . l) / t`` against ``oracle.predicted_rate(t)``,
    passing within ``max(3 SE, 1%)``."""
    for key in ORACLE_KEYS:
        if curve.params.get(key) != oracle.params.get(key):
            raise ParameterMismatch(
                f"{key}: Monte Carlo has {curve.params.get(key)!r}, oracle has {oracle.params.get(key)!r}")
    var, se = curve.at(t)
    rate, rate_se = var / t, se / t
    target = oracle.predicted_rate(t)
    tol = max(N_SIGMA * rate_se, ORACLE_REL_TOL * abs(target))
    return OracleComparison(float(t), rate, rate_se, float(target), tol)
