"""Event-driven simulation of the exclusion process and the walker it drives.

Three modes share the same exclusion clock:

``coupled``
    the pair ``(xi_t, X_t)``: exclusion on the torus plus a walker jumping
    across edges whose both endpoints are occupied;
``environment``
    the environment seen from the walker, simulated directly by shifting
    the whole configuration whenever the walker would move;
``tagged``
    a tagged exclusion particle, for comparison with the walker.

The exclusion part fires ordered pairs ``(a, a + y)`` at rate ``p(y)`` each,
so the total clock rate is constant, ``L^d * sum_y p(y)``. Exchanges between
equal occupancies are drawn and discarded.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
import math
import os
from typing import Sequence

import numpy as np

from . import _kernels
from .lattice import (
    Configuration,
    Torus,
    TransitionKernel,
    make_rng,
    sample_bernoulli,
)

MODES = ("coupled", "environment", "tagged")
THREADS_ENV = "EXCLUSIM_THREADS"


def geometric_schedule(T: float) -> tuple[float, ...]:
    """Sample times ``T 2^-k`` for ``k = 0 .. floor(log2 T)``, plus 0 and T."""
    if T <= 0:
        return (0.0,)
    times = {0.0, float(T)}
    if T >= 1:
        for k in range(int(math.floor(math.log2(T))) + 1):
            times.add(float(T) / 2 ** k)
    return tuple(sorted(times))


@dataclass(frozen=True)
class SimConfig:
    torus: Torus
    kernel: TransitionKernel
    rho: float
    T: float
    samples: tuple[float, ...] | None = None
    mode: str = "coupled"
    seed: int = 0

    def __post_init__(self):
        self.torus.check_kernel(self.kernel)
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.rho}")
        if not self.T >= 0:
            raise ValueError(f"horizon must be nonnegative, got {self.T}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "tagged" and self.rho == 0.0:
            raise ValueError("tagged mode requires a particle at the origin; rho=0 gives none")
        if self.samples is None:
            samples = geometric_schedule(self.T)
        else:
            samples = tuple(sorted({0.0, *(float(s) for s in self.samples)}))
            if samples[0] < 0 or samples[-1] > self.T:
                raise ValueError(f"sample times must lie in [0, {self.T}]")
        object.__setattr__(self, "samples", samples)

    def with_seed(self, seed: int) -> SimConfig:
        return replace(self, seed=int(seed))

    def params(self) -> dict:
        """Everything except the seed; used to check ensembles for consistency."""
        return {
            "d": self.torus.d,
            "L": self.torus.L,
            "R": self.kernel.R,
            "kernel": [[list(y), p] for y, p in self.kernel.weights],
            "rho": self.rho,
            "T": self.T,
            "samples": list(self.samples),
            "mode": self.mode,
        }


@dataclass(frozen=True)
class _Tables:
    nbr: np.ndarray
    disp: np.ndarray
    cdf: np.ndarray
    neg: np.ndarray
    exchange_rate: float


@lru_cache(maxsize=32)
def _tables(torus: Torus, kernel: TransitionKernel) -> _Tables:
    cdf = np.cumsum(kernel.rates) / kernel.rates.sum()
    return _Tables(
        nbr=torus.neighbor_table(kernel),
        disp=kernel.displacements.copy(),
        cdf=cdf,
        neg=kernel.negation.copy(),
        exchange_rate=total_exchange_rate(torus, kernel),
    )


def total_exchange_rate(torus: Torus, kernel: TransitionKernel) -> float:
    """Rate of the ordered-pair exchange clock, ``L^d * sum_y p(y)``."""
    return torus.n_sites * float(kernel.rates.sum())


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str
    sites: tuple[tuple[int, ...], tuple[int, ...]]
    displacement: tuple[int, ...]
    snapshot: bool = False


@dataclass
class WorldState:
    """Mutable state of the coupled process.

    ``xi`` is the flat occupation array, ``X`` the unwrapped walker position,
    ``J`` the per-displacement jump counts and ``clock`` holds ``[t, A_1..A_d]``
    where ``A`` is the exact compensator ``int_0^t phi(eta_s) ds``.
    """

    torus: Torus
    xi: np.ndarray
    X: np.ndarray
    J: np.ndarray
    clock: np.ndarray
    site: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))

    @classmethod
    def initial(cls, config: SimConfig, xi: Configuration) -> WorldState:
        return cls(
            torus=config.torus,
            xi=np.ascontiguousarray(xi.flat(), dtype=np.uint8).copy(),
            X=np.zeros(config.torus.d, dtype=np.int64),
            J=np.zeros(config.kernel.size, dtype=np.int64),
            clock=np.zeros(1 + config.torus.d),
        )

    @property
    def t(self) -> float:
        return float(self.clock[0])

    @property
    def A(self) -> np.ndarray:
        return self.clock[1:].copy()

    @property
    def configuration(self) -> Configuration:
        return Configuration(self.xi.reshape(self.torus.shape))

    @property
    def martingale(self) -> np.ndarray:
        return self.X - self.A


_NO_SAMPLES = np.zeros(0)


def step(world: WorldState, config: SimConfig, rng) -> tuple[WorldState, EventRecord]:
    """Advance the coupled process by one event, in place.

    Runs the same compiled loop as :func:`run`, stopped after one event.
    """
    tables = _tables(config.torus, config.kernel)
    d, m = config.torus.d, config.kernel.size
    last = np.zeros(4, dtype=np.int64)
    _kernels.advance_coupled(
        world.xi, tables.nbr, tables.disp, tables.cdf, tables.exchange_rate, np.inf, _NO_SAMPLES,
        np.zeros((0, d), dtype=np.int64), np.zeros((0, d)), np.zeros((0, m), dtype=np.int64),
        world.X, world.J, world.clock, world.site, last, 1, rng)
    kind, a, b, k = (int(v) for v in last)
    torus = config.torus
    event = EventRecord(
        time=world.t,
        kind="walker" if kind == _kernels.WALKER else "exchange",
        sites=(torus.coords(a), torus.coords(b)),
        displacement=tuple(int(v) for v in tables.disp[k]),
    )
    return world, event


@dataclass
class Trajectory:
    """Samples ``(t_i, X_{t_i}, A_{t_i}, J_{t_i})`` of one replica."""

    times: np.ndarray
    X: np.ndarray
    A: np.ndarray
    J: np.ndarray
    seed: int
    config: SimConfig
    replica: int = 0
    final: Configuration | None = None
    events: int = 0

    @property
    def martingale(self) -> np.ndarray:
        return self.X - self.A

    def at(self, t: float) -> int:
        """Row index of sample time ``t``."""
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise KeyError(f"time {t} not in sample schedule")
        return int(hits[0])


def initial_configuration(config: SimConfig, rng) -> Configuration:
    xi = sample_bernoulli(config.torus, config.rho, rng)
    if config.mode == "tagged":
        occ = xi.occupancy.copy()
        occ[(0,) * config.torus.d] = 1
        xi = Configuration(occ)
    return xi


def _run(config: SimConfig, initial: Configuration | None, replica: int = 0) -> Trajectory:
    rng = make_rng(config.seed)
    xi = initial_configuration(config, rng) if initial is None else initial
    if xi.torus != config.torus:
        raise ValueError(f"initial configuration lives on {xi.torus}, config on {config.torus}")
    tables = _tables(config.torus, config.kernel)
    samples = np.asarray(config.samples, dtype=np.float64)
    S, d, m = samples.size, config.torus.d, config.kernel.size
    X = np.zeros((S, d), dtype=np.int64)
    A = np.zeros((S, d))
    J = np.zeros((S, m), dtype=np.int64)
    state = np.ascontiguousarray(xi.flat(), dtype=np.uint8).copy()
    pos = np.zeros(d, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    clock = np.zeros(1 + d)
    site = np.zeros(1, dtype=np.int64)
    last = np.zeros(4, dtype=np.int64)
    T = float(config.T)
    if config.mode == "coupled":
        events = _kernels.advance_coupled(state, tables.nbr, tables.disp, tables.cdf, tables.exchange_rate,
                                          T, samples, X, A, J, pos, counts, clock, site, last, -1, rng)
    elif config.mode == "environment":
        events = _kernels.advance_environment(state, tables.nbr, tables.disp, tables.cdf, tables.exchange_rate,
                                              T, samples, X, A, J, pos, counts, clock, last, -1, rng)
    else:
        if state[0] != 1:
            raise ValueError("tagged mode requires an occupied origin")
        events = _kernels.advance_tagged(state, tables.nbr, tables.disp, tables.cdf, tables.neg,
                                         tables.exchange_rate, T, samples, X, A, J, pos, counts, clock,
                                         site, last, -1, rng)
    return Trajectory(
        times=samples, X=X, A=A, J=J, seed=config.seed, config=config, replica=replica,
        final=Configuration(state.reshape(config.torus.shape)), events=int(events),
    )


def run(config: SimConfig, initial: Configuration | None = None) -> Trajectory:
    """Simulate one replica in ``config.mode``, deterministic given ``config.seed``.

    ``initial`` overrides the Bernoulli initial configuration.
    """
    return _run(config, initial)


def run_environment(config: SimConfig, initial: Configuration | None = None) -> Trajectory:
    return _run(replace(config, mode="environment"), initial)


def run_tagged(config: SimConfig, initial: Configuration | None = None) -> Trajectory:
    """Track the particle starting at the origin. ``A`` is identically zero."""
    if initial is None and config.rho == 0:
        raise ValueError("tagged mode requires a particle at the origin")
    if config.mode != "tagged":
        config = replace(config, mode="tagged")
    return _run(config, initial)


def replica_seed(master_seed: int, replica: int) -> int:
    """Counter-derived 63-bit seed for replica ``replica``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replica),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def default_workers() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        return max(1, int(value))
    return 1


def _run_replica(args) -> Trajectory:
    config, replica = args
    return _run(config, None, replica)


def run_ensemble(config: SimConfig, replicas: int, master_seed: int,
                 workers: int | None = None, first: int = 0) -> list[Trajectory]:
    """Run replicas ``first .. first + replicas - 1`` with seeds derived from ``master_seed``.

    The result is independent of ``workers``.
    """
    jobs = [(config.with_seed(replica_seed(master_seed, i)), i) for i in range(first, first + replicas)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or replicas <= 1:
        return [_run_replica(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_replica, jobs, chunksize=max(1, replicas // (4 * workers))))


def run_events(config: SimConfig, n_events: int, initial: Configuration | None = None
               ) -> tuple[WorldState, list[EventRecord]]:
    """Step the coupled process ``n_events`` times; for debugging and tests."""
    rng = make_rng(config.seed)
    xi = initial_configuration(config, rng) if initial is None else initial
    world = WorldState.initial(config, xi)
    events = []
    for _ in range(n_events):
        world, event = step(world, config, rng)
        events.append(event)
    return world, events


def support_columns(kernel: TransitionKernel) -> Sequence[str]:
    return [f"J[{','.join(str(v) for v in y)}]" for y, _ in kernel.weights]
