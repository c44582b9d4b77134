"""Lattice geometry, jump kernels, occupation configurations and the
conductance / drift fields derived from them.

Sites of a torus are addressed either by coordinate tuples or, in one
dimension, by plain integers. Coordinates are always reduced modulo ``L``.
Internally every routine that needs speed works on flat (C-order) site
indices; :meth:`Torus.neighbor_table` is the bridge.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import itertools
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    GeometryError,
    NormalizationViolation,
    RangeViolation,
    SymmetryViolation,
)

KERNEL_TOL = 1e-12


def _as_vector(y, d: int) -> tuple[int, ...]:
    if np.isscalar(y):
        vec = (int(y),)
    else:
        vec = tuple(int(v) for v in y)
    if len(vec) != d:
        raise RangeViolation(f"displacement {y!r} is not {d}-dimensional", y)
    return vec


def support(d: int, R: int) -> list[tuple[int, ...]]:
    """All displacements ``y`` with ``0 < |y|_1 <= R``, lexicographically sorted."""
    out = []
    for y in itertools.product(range(-R, R + 1), repeat=d):
        if 0 < sum(abs(v) for v in y) <= R:
            out.append(y)
    return out


@dataclass(frozen=True)
class TransitionKernel:
    """Finite-range symmetric jump law ``p(y)``.

    Build instances with :func:`build_kernel`, which validates symmetry,
    normalization and full-range support.
    """

    d: int
    R: int
    weights: tuple[tuple[tuple[int, ...], float], ...]

    @cached_property
    def displacements(self) -> np.ndarray:
        return np.array([y for y, _ in self.weights], dtype=np.int64).reshape(-1, self.d)

    @cached_property
    def rates(self) -> np.ndarray:
        return np.array([p for _, p in self.weights], dtype=np.float64)

    @property
    def size(self) -> int:
        return len(self.weights)

    @cached_property
    def negation(self) -> np.ndarray:
        """``negation[k]`` is the index of ``-displacements[k]``."""
        index = {y: k for k, (y, _) in enumerate(self.weights)}
        return np.array([index[tuple(-v for v in y)] for y, _ in self.weights], dtype=np.int64)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(self.weights)

    def p(self, y) -> float:
        return self.as_dict().get(_as_vector(y, self.d), 0.0)

    def second_moment(self, direction) -> float:
        """``sum_y (y.l)^2`` over the support (unweighted)."""
        proj = self.displacements @ np.asarray(direction, dtype=float).reshape(self.d)
        return float(np.sum(proj ** 2))

    def to_text(self) -> str:
        lines = [" ".join(str(v) for v in y) + " " + repr(p) for y, p in self.weights]
        return "\n".join(lines) + "\n"


def build_kernel(d: int, R: int, weights: Mapping) -> TransitionKernel:
    """Validate ``weights`` and return a :class:`TransitionKernel`.

    Keys must be exactly the displacements with ``0 < |y|_1 <= R`` (integers
    are accepted when ``d == 1``); every weight must be strictly positive,
    ``p(y) == p(-y)`` and the total mass must be one.
    """
    if d < 1 or R < 1:
        raise RangeViolation(f"need d >= 1 and R >= 1, got d={d}, R={R}")
    table: dict[tuple[int, ...], float] = {}
    for key, value in weights.items():
        y = _as_vector(key, d)
        norm = sum(abs(v) for v in y)
        if norm == 0 or norm > R:
            raise RangeViolation(f"displacement {y} outside 0 < |y|_1 <= {R}", y)
        if y in table:
            raise RangeViolation(f"displacement {y} given twice", y)
        table[y] = float(value)
    for y in support(d, R):
        if y not in table:
            raise RangeViolation(f"missing weight for displacement {y}", y)
        if not table[y] > 0.0:
            raise RangeViolation(f"weight for displacement {y} must be positive, got {table[y]}", y)
    for y, p in table.items():
        q = table[tuple(-v for v in y)]
        if abs(p - q) > KERNEL_TOL:
            raise SymmetryViolation(f"p{y}={p} differs from p{tuple(-v for v in y)}={q}", y)
    total = sum(table.values())
    if abs(total - 1.0) > KERNEL_TOL:
        raise NormalizationViolation(f"weights sum to {total!r}, expected 1")
    return TransitionKernel(d=d, R=R, weights=tuple((y, table[y]) for y in support(d, R)))


def uniform_kernel(d: int, R: int) -> TransitionKernel:
    ys = support(d, R)
    return build_kernel(d, R, {y: 1.0 / len(ys) for y in ys})


def kernel_from_text(text: str) -> TransitionKernel:
    """Parse the ``y1 ... yd p`` table written by :meth:`TransitionKernel.to_text`."""
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        raise RangeViolation("empty kernel table")
    d = len(rows[0]) - 1
    weights = {}
    for row in rows:
        if len(row) != d + 1:
            raise RangeViolation(f"kernel row {' '.join(row)!r} has wrong arity")
        weights[tuple(int(v) for v in row[:-1])] = float(row[-1])
    R = max(sum(abs(v) for v in y) for y in weights)
    return build_kernel(d, R, weights)


@dataclass(frozen=True)
class Torus:
    """Discrete torus ``{0, ..., L-1}^d``."""

    L: int
    d: int

    def __post_init__(self):
        if self.L < 1 or self.d < 1:
            raise GeometryError(f"invalid torus L={self.L}, d={self.d}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def n_sites(self) -> int:
        return self.L ** self.d

    def check_kernel(self, kernel: TransitionKernel) -> None:
        if kernel.d != self.d:
            raise GeometryError(f"kernel dimension {kernel.d} != torus dimension {self.d}")
        if self.L <= 2 * kernel.R:
            raise GeometryError(f"torus side L={self.L} must exceed 2R={2 * kernel.R}")

    def site(self, x) -> tuple[int, ...]:
        return tuple(v % self.L for v in _as_vector(x, self.d))

    def index(self, x) -> int:
        return int(np.ravel_multi_index(self.site(x), self.shape))

    def coords(self, index: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(index, self.shape))

    def wrapped_displacement(self, x, y) -> tuple[int, ...]:
        """Minimal-image displacement from ``x`` to ``y``."""
        out = []
        for a, b in zip(self.site(x), self.site(y)):
            delta = (b - a) % self.L
            if delta > self.L // 2:
                delta -= self.L
            out.append(delta)
        return tuple(out)

    def distance(self, x, y) -> int:
        return sum(abs(v) for v in self.wrapped_displacement(x, y))

    def neighbor_table(self, kernel: TransitionKernel) -> np.ndarray:
        """``table[s, k]`` is the flat index of site ``s + displacements[k]``."""
        self.check_kernel(kernel)
        coords = np.indices(self.shape).reshape(self.d, -1).T
        table = np.empty((self.n_sites, kernel.size), dtype=np.int64)
        for k, y in enumerate(kernel.displacements):
            shifted = (coords + y) % self.L
            table[:, k] = np.ravel_multi_index(shifted.T, self.shape)
        return table


class Configuration:
    """Occupation field ``xi: torus -> {0, 1}``; immutable."""

    __slots__ = ("occupancy", "count")

    def __init__(self, occupancy):
        occ = np.array(occupancy, dtype=np.int64)
        if occ.ndim == 0:
            raise ValueError("configuration needs at least one axis")
        if occ.size and not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupancies must be 0 or 1")
        occ = occ.astype(np.uint8)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "count", int(occ.sum()))

    def __setattr__(self, name, value):
        raise AttributeError("Configuration is immutable")

    def __reduce__(self):
        return (Configuration, (self.occupancy.copy(),))

    @property
    def torus(self) -> Torus:
        shape = self.occupancy.shape
        if len(set(shape)) != 1:
            raise GeometryError(f"configuration shape {shape} is not a cube")
        return Torus(L=shape[0], d=len(shape))

    @property
    def density(self) -> float:
        return self.count / self.occupancy.size

    def __getitem__(self, x) -> int:
        return int(self.occupancy[self.torus.site(x)])

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash((self.occupancy.shape, self.occupancy.tobytes()))

    def __repr__(self):
        return f"Configuration({self.occupancy.tolist()!r})"

    def flat(self) -> np.ndarray:
        return self.occupancy.reshape(-1)

    def shifted(self, y) -> Configuration:
        """Return ``tau_y xi``, i.e. ``(tau_y xi)(z) = xi(z + y)``."""
        y = _as_vector(y, self.occupancy.ndim)
        return Configuration(np.roll(self.occupancy, shift=tuple(-v for v in y), axis=tuple(range(len(y)))))

    def reflected(self) -> Configuration:
        """Return the configuration ``z -> xi(-z)``."""
        occ = self.occupancy
        for axis in range(occ.ndim):
            occ = np.roll(np.flip(occ, axis=axis), 1, axis=axis)
        return Configuration(occ)

    def to_text(self) -> str:
        """Rows of 0/1 characters along the last axis; 3d+ slices separated by blank lines."""
        occ = self.occupancy
        if occ.ndim == 1:
            return "".join(map(str, occ.tolist())) + "\n"
        rows = occ.reshape(-1, occ.shape[-1], occ.shape[-1])
        blocks = ["\n".join("".join(map(str, r.tolist())) for r in block) for block in rows]
        return "\n\n".join(blocks) + "\n"

    @classmethod
    def from_text(cls, text: str, d: int = 1) -> Configuration:
        blocks = [b for b in text.strip().split("\n\n") if b.strip()]
        grid = [[[int(ch) for ch in row.strip()] for row in block.splitlines() if row.strip()] for block in blocks]
        arr = np.array(grid, dtype=np.int64)
        L = arr.shape[-1]
        return cls(arr.reshape((L,) * d))


def exchange(xi: Configuration, y, z) -> Configuration:
    """Return ``xi^{y,z}``: occupations at ``y`` and ``z`` swapped."""
    torus = xi.torus
    a, b = torus.site(y), torus.site(z)
    if xi.occupancy[a] == xi.occupancy[b]:
        return xi
    occ = xi.occupancy.copy()
    occ[a], occ[b] = occ[b], occ[a]
    return Configuration(occ)


def conductance(xi: Configuration, x, y, kernel: TransitionKernel) -> int:
    """Edge weight ``xi(x) xi(y)`` if ``|x - y|_1 <= R`` (wrapped), else 0."""
    torus = xi.torus
    dist = torus.distance(x, y)
    if dist == 0 or dist > kernel.R:
        return 0
    return xi[x] * xi[y]


def drift_field(eta: Configuration, kernel: TransitionKernel) -> np.ndarray:
    """Local drift ``phi(eta) = sum_y y c_{0,y}(eta)`` of a walker at the origin."""
    origin = (0,) * kernel.d
    phi = np.zeros(kernel.d)
    if eta[origin] == 0:
        return phi
    for y in kernel.displacements:
        phi += y * eta[tuple(y)]
    return phi


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_bernoulli(torus: Torus, rho: float, seed) -> Configuration:
    """Draw a configuration from the product Bernoulli(``rho``) law."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {rho}")
    rng = make_rng(seed)
    return Configuration(rng.random(torus.shape) < rho)


def sites(torus: Torus) -> Sequence[tuple[int, ...]]:
    return list(itertools.product(range(torus.L), repeat=torus.d))
