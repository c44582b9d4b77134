"""Plain-text ``key = value`` configuration files.

Repeating a grid key (``rho``, ``L``, ``T``, ``mode``) forms a grid; repeated
``kernel`` lines are the rows ``y1 ... yd p`` of the jump kernel (or the
single word ``uniform``); repeated ``direction`` lines list projection
vectors for the oracle. Lines starting with ``#`` are comments.

Example::

    d = 1
    L = 512
    R = 1
    kernel = -1 0.5
    kernel = 1 0.5
    rho = 0.5
    T = 10000
    samples = geometric
    mode = coupled
    replicas = 500
    seed = 2024
"""
from __future__ import annotations

from dataclasses import dataclass, field
import itertools
from typing import Sequence

from .dynamics import MODES, SimConfig
from .errors import ConfigParseError, ExclusimError
from .lattice import Torus, TransitionKernel, build_kernel, support
from .oracle import geometric_lambdas

SIM_KEYS = {"d", "L", "R", "kernel", "rho", "T", "samples", "mode", "replicas", "seed"}
ORACLE_KEYS = {"d", "L", "R", "kernel", "rho", "lambdas", "direction", "random_functions", "seed"}
GRID_KEYS = ("L", "rho", "T", "mode")
SIM_REQUIRED = ("d", "L", "R", "kernel", "rho", "T")
ORACLE_REQUIRED = ("d", "L", "R", "kernel", "rho", "lambdas")


@dataclass
class ParsedConfig:
    entries: dict[str, list[tuple[int, str]]] = field(default_factory=dict)

    def has(self, key: str) -> bool:
        return key in self.entries

    def values(self, key: str) -> list[tuple[int, str]]:
        return self.entries.get(key, [])

    def single(self, key: str, default=None) -> tuple[int | None, str | None]:
        vals = self.values(key)
        if not vals:
            return None, default
        if len(vals) > 1:
            raise ConfigParseError("key may appear only once", line=vals[1][0], key=key)
        return vals[0]


def parse_text(text: str, allowed: set[str]) -> ParsedConfig:
    parsed = ParsedConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigParseError("unknown key", line=lineno, key=key)
        parsed.entries.setdefault(key, []).append((lineno, value))
    return parsed


def _number(kind, key: str, lineno, text: str):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigParseError(f"cannot read {text!r} as {kind.__name__}", line=lineno, key=key) from None


def _int(parsed: ParsedConfig, key: str, default=None) -> int:
    lineno, value = parsed.single(key, default)
    if value is None:
        raise ConfigParseError("missing required key", key=key)
    return _number(int, key, lineno, value) if isinstance(value, str) else int(value)


def _require(parsed: ParsedConfig, keys: Sequence[str]):
    for key in keys:
        if not parsed.has(key):
            raise ConfigParseError("missing required key", key=key)


def _kernel(parsed: ParsedConfig, d: int, R: int) -> TransitionKernel:
    rows = parsed.values("kernel")
    if len(rows) == 1 and rows[0][1].lower() == "uniform":
        ys = support(d, R)
        return build_kernel(d, R, {y: 1.0 / len(ys) for y in ys})
    weights = {}
    for lineno, value in rows:
        parts = value.split()
        if len(parts) != d + 1:
            raise ConfigParseError(f"kernel row needs {d} coordinates and a rate", line=lineno, key="kernel")
        y = tuple(_number(int, "kernel", lineno, v) for v in parts[:-1])
        weights[y] = _number(float, "kernel", lineno, parts[-1])
    try:
        return build_kernel(d, R, weights)
    except ExclusimError as exc:
        raise ConfigParseError(str(exc), key="kernel") from exc


def _grid_values(parsed: ParsedConfig, key: str, kind) -> list:
    return [_number(kind, key, lineno, value) for lineno, value in parsed.values(key)]


def _samples(parsed: ParsedConfig):
    lineno, value = parsed.single("samples", "geometric")
    if value.strip().lower() == "geometric":
        return None
    times = [_number(float, "samples", lineno, v) for v in value.replace(",", " ").split()]
    if not times:
        raise ConfigParseError("empty sample schedule", line=lineno, key="samples")
    return tuple(times)


@dataclass
class Campaign:
    configs: list[SimConfig]
    replicas: int
    master_seed: int

    @staticmethod
    def point_name(config: SimConfig) -> str:
        return f"{config.mode}_d{config.torus.d}_L{config.torus.L}_rho{config.rho!r}_T{config.T!r}"


def load_campaign(text: str, seed: int | None = None, replicas: int | None = None,
                  mode: str | None = None) -> Campaign:
    """Build the simulation grid; command-line overrides replace file values."""
    parsed = parse_text(text, SIM_KEYS)
    _require(parsed, SIM_REQUIRED)
    d = _int(parsed, "d")
    R = _int(parsed, "R")
    kernel = _kernel(parsed, d, R)
    samples = _samples(parsed)
    Ls = _grid_values(parsed, "L", int)
    rhos = _grid_values(parsed, "rho", float)
    Ts = _grid_values(parsed, "T", float)
    modes = [mode] if mode is not None else ([v for _, v in parsed.values("mode")] or ["coupled"])
    for m in modes:
        if m not in MODES:
            raise ConfigParseError(f"mode must be one of {MODES}, got {m!r}", key="mode")
    n_rep = replicas if replicas is not None else _int(parsed, "replicas", 1)
    master = seed if seed is not None else _int(parsed, "seed", 0)
    if n_rep < 1:
        raise ConfigParseError("replicas must be positive", key="replicas")
    configs = []
    for L, rho, T, m in itertools.product(Ls, rhos, Ts, modes):
        try:
            configs.append(SimConfig(Torus(L, d), kernel, rho, T, samples=samples, mode=m))
        except (ValueError, ExclusimError) as exc:
            raise ConfigParseError(f"invalid grid point L={L}, rho={rho}, T={T}, mode={m}: {exc}") from exc
    return Campaign(configs, n_rep, master)


@dataclass
class OraclePlan:
    tori: list[Torus]
    kernel: TransitionKernel
    rhos: list[float]
    lambdas: tuple[float, ...]
    directions: list[tuple[float, ...]]
    random_functions: int
    seed: int


def _lambdas(parsed: ParsedConfig) -> tuple[float, ...]:
    lineno, value = parsed.single("lambdas")
    parts = value.split()
    if not parts:
        raise ConfigParseError("empty lambda schedule", line=lineno, key="lambdas")
    if parts[0].lower() == "geometric":
        if len(parts) != 2:
            raise ConfigParseError("use 'geometric K' for 2^0 .. 2^-K", line=lineno, key="lambdas")
        k = _number(int, "lambdas", lineno, parts[1])
        if k < 0:
            raise ConfigParseError("K must be nonnegative", line=lineno, key="lambdas")
        return geometric_lambdas(k)
    lams = tuple(_number(float, "lambdas", lineno, v) for v in parts)
    if any(lam <= 0 for lam in lams):
        raise ConfigParseError("lambdas must be positive", line=lineno, key="lambdas")
    return lams


def load_oracle_plan(text: str, seed: int | None = None) -> OraclePlan:
    parsed = parse_text(text, ORACLE_KEYS)
    _require(parsed, ORACLE_REQUIRED)
    d = _int(parsed, "d")
    R = _int(parsed, "R")
    kernel = _kernel(parsed, d, R)
    tori = []
    for L in _grid_values(parsed, "L", int):
        torus = Torus(L, d)
        try:
            torus.check_kernel(kernel)
        except ExclusimError as exc:
            raise ConfigParseError(str(exc), key="L") from exc
        tori.append(torus)
    rhos = _grid_values(parsed, "rho", float)
    for rho in rhos:
        if not 0.0 <= rho <= 1.0:
            raise ConfigParseError(f"rho={rho} outside [0, 1]", key="rho")
    directions = []
    for lineno, value in parsed.values("direction"):
        vec = tuple(_number(float, "direction", lineno, v) for v in value.split())
        if len(vec) != d:
            raise ConfigParseError(f"direction needs {d} components", line=lineno, key="direction")
        directions.append(vec)
    if not directions:
        directions = [tuple(1.0 if i == j else 0.0 for j in range(d)) for i in range(d)]
    return OraclePlan(
        tori=tori, kernel=kernel, rhos=rhos, lambdas=_lambdas(parsed), directions=directions,
        random_functions=_int(parsed, "random_functions", 100),
        seed=seed if seed is not None else _int(parsed, "seed", 0),
    )
