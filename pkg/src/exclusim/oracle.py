"""Exact finite-state computations for the environment seen by the walker.

On a torus with ``n = L^d`` sites every configuration is a bit string; state
``s`` has particle at flat site ``i`` iff bit ``i`` of ``s`` is set. All
generators are assembled as sparse matrices acting on functions of the
state, ``(G f)(s) = sum_t G[s, t] (f(t) - f(s))``, i.e. rows are departure
states.

The sum-of-squares Dirichlet forms and the martingale variance are computed
from the transition maps directly, never from the assembled matrices, so
that the two routes check each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonStabilized, SolverFailure, StateSpaceTooLarge
from .lattice import Configuration, Torus, TransitionKernel

MAX_SITES = 20
DENSE_LIMIT = 2 ** 12
SOLVER_TOL = 1e-10
KINDS = ("se", "rc", "ew")


@dataclass(frozen=True)
class StateSpace:
    torus: Torus

    def __post_init__(self):
        if self.torus.n_sites > MAX_SITES:
            raise StateSpaceTooLarge(
                f"2^{self.torus.n_sites} configurations exceed the cap of 2^{MAX_SITES}")

    @property
    def n_sites(self) -> int:
        return self.torus.n_sites

    @property
    def size(self) -> int:
        return 1 << self.n_sites

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.int64)

    def occupation(self, site: int) -> np.ndarray:
        """Occupation of flat ``site`` as a vector over all states."""
        return (self.states >> site) & 1

    def particle_counts(self) -> np.ndarray:
        counts = np.zeros(self.size, dtype=np.int64)
        for i in range(self.n_sites):
            counts += self.occupation(i)
        return counts

    def configuration(self, index: int) -> Configuration:
        bits = [(index >> i) & 1 for i in range(self.n_sites)]
        return Configuration(np.array(bits).reshape(self.torus.shape))

    def index(self, xi: Configuration) -> int:
        flat = xi.flat()
        return int(sum(int(v) << i for i, v in enumerate(flat)))


@dataclass(frozen=True)
class MeasureVector:
    weights: np.ndarray
    rho: float

    def expect(self, f: np.ndarray) -> float:
        return float(self.weights @ f)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(self.weights @ (f * g))


def bernoulli_measure(space: StateSpace, rho: float) -> MeasureVector:
    """Product Bernoulli law; ``rho`` in {0, 1} gives a point mass."""
    k = space.particle_counts()
    n = space.n_sites
    weights = np.power(float(rho), k) * np.power(1.0 - float(rho), n - k)
    return MeasureVector(weights=weights, rho=float(rho))


def exchange_maps(space: StateSpace, kernel: TransitionKernel) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(p(y), s -> s^{a, a+y})`` for every ordered pair ``(a, a + y)``."""
    nbr = space.torus.neighbor_table(kernel)
    s = space.states
    for a in range(space.n_sites):
        for k, p in enumerate(kernel.rates):
            b = int(nbr[a, k])
            differ = ((s >> a) ^ (s >> b)) & 1
            yield float(p), np.where(differ == 1, s ^ ((1 << a) | (1 << b)), s)


def shift_map(space: StateSpace, kernel: TransitionKernel, k: int) -> np.ndarray:
    """``s -> tau_y s`` with ``(tau_y eta)(z) = eta(z + y)``, ``y = displacements[k]``."""
    nbr = space.torus.neighbor_table(kernel)
    s = space.states
    out = np.zeros_like(s)
    for z in range(space.n_sites):
        out |= ((s >> int(nbr[z, k])) & 1) << z
    return out


def bond_indicator(space: StateSpace, kernel: TransitionKernel, k: int) -> np.ndarray:
    """``c_{0,y}(eta) = eta(0) eta(y)`` for ``y = displacements[k]``."""
    nbr = space.torus.neighbor_table(kernel)
    return space.occupation(0) * space.occupation(int(nbr[0, k]))


def shift_maps(space: StateSpace, kernel: TransitionKernel) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(y, tau_y, c_{0,y})`` for every displacement in the support."""
    for k, y in enumerate(kernel.displacements):
        yield y, shift_map(space, kernel, k), bond_indicator(space, kernel, k)


def drift_vector(space: StateSpace, kernel: TransitionKernel, direction) -> np.ndarray:
    """``phi . l`` as a function of the state."""
    l = np.asarray(direction, dtype=float).reshape(kernel.d)
    out = np.zeros(space.size)
    for y, _, c in shift_maps(space, kernel):
        out += float(y @ l) * c
    return out


@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: sp.csr_matrix
    kind: str
    space: StateSpace
    kernel: TransitionKernel

    @property
    def torus(self) -> Torus:
        return self.space.torus

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ f

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _rate_matrix(n: int, rows: list, cols: list, vals: list) -> sp.csr_matrix:
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    off = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = sp.diags(-np.asarray(off.sum(axis=1)).ravel())
    return (off + diag).tocsr()


def build_generator(torus: Torus, kernel: TransitionKernel, kind: str) -> GeneratorMatrix:
    """Exact rate matrix of the exclusion part (``se``), the shift part
    (``rc``) or their sum (``ew``). Transitions onto the same state are
    dropped, so they contribute to neither off-diagonal nor diagonal."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    torus.check_kernel(kernel)
    space = StateSpace(torus)
    if kind == "ew":
        se = build_generator(torus, kernel, "se")
        rc = build_generator(torus, kernel, "rc")
        return GeneratorMatrix((se.matrix + rc.matrix).tocsr(), "ew", space, kernel)
    s = space.states
    rows, cols, vals = [], [], []
    if kind == "se":
        for p, target in exchange_maps(space, kernel):
            moved = target != s
            rows.append(s[moved])
            cols.append(target[moved])
            vals.append(np.full(int(moved.sum()), p))
    else:
        for _, target, c in shift_maps(space, kernel):
            moved = (target != s) & (c == 1)
            rows.append(s[moved])
            cols.append(target[moved])
            vals.append(np.ones(int(moved.sum())))
    return GeneratorMatrix(_rate_matrix(space.size, rows, cols, vals), kind, space, kernel)


def generator_family(torus: Torus, kernel: TransitionKernel) -> dict[str, GeneratorMatrix]:
    se = build_generator(torus, kernel, "se")
    rc = build_generator(torus, kernel, "rc")
    ew = GeneratorMatrix((se.matrix + rc.matrix).tocsr(), "ew", se.space, kernel)
    return {"se": se, "rc": rc, "ew": ew}


def exchange_clock_rate(space: StateSpace, kernel: TransitionKernel) -> float:
    """Sum of all ordered-pair exchange rates, no-ops included (state independent)."""
    return float(sum(p for p, _ in exchange_maps(space, kernel)))


def check_reversibility(G: GeneratorMatrix, nu: MeasureVector) -> float:
    """``max |nu(s) G(s,t) - nu(t) G(t,s)|`` over state pairs."""
    flux = sp.diags(nu.weights) @ G.matrix
    diff = (flux - flux.T).tocoo()
    return float(np.max(np.abs(diff.data), initial=0.0))


def check_stationarity(G: GeneratorMatrix, nu: MeasureVector) -> float:
    """``max |(nu^T G)_t|``."""
    return float(np.max(np.abs(G.matrix.T @ nu.weights), initial=0.0))


def check_self_adjoint(G: GeneratorMatrix, nu: MeasureVector, f: np.ndarray, g: np.ndarray) -> float:
    return abs(nu.inner(f, G.apply(g)) - nu.inner(G.apply(f), g))


def dirichlet_form(f: np.ndarray, G: GeneratorMatrix, nu: MeasureVector) -> float:
    """``<f, -G f>_nu``."""
    return -nu.inner(f, G.apply(f))


def dirichlet_form_sos(f: np.ndarray, kind: str, space: StateSpace, kernel: TransitionKernel,
                       nu: MeasureVector) -> float:
    """Sum-of-squares form: half the ``nu``-average of rate times squared increment."""
    total = 0.0
    if kind in ("se", "ew"):
        for p, target in exchange_maps(space, kernel):
            total += 0.5 * p * nu.expect((f[target] - f) ** 2)
    if kind in ("rc", "ew"):
        for _, target, c in shift_maps(space, kernel):
            total += 0.5 * nu.expect(c * (f[target] - f) ** 2)
    return total


def expected_bond(space: StateSpace, kernel: TransitionKernel, nu: MeasureVector, k: int) -> float:
    """Exact ``E_nu[c_{0,y}]``."""
    return nu.expect(bond_indicator(space, kernel, k).astype(float))


@dataclass(frozen=True)
class ResolventSolution:
    lam: float
    direction: np.ndarray
    f: np.ndarray
    residual: float
    method: str


def solve_resolvent(lam: float, direction, G: GeneratorMatrix, nu: MeasureVector | None = None,
                    tol: float = SOLVER_TOL) -> ResolventSolution:
    """Solve ``(lam I - G) f = phi . l``.

    Dense LU up to ``DENSE_LIMIT`` states, otherwise preconditioned conjugate
    gradients (the generator is symmetric: rates conserve particle number and
    are symmetric within each sector).
    """
    if not lam > 0:
        raise ValueError(f"resolvent parameter must be positive, got {lam}")
    l = np.asarray(direction, dtype=float).reshape(G.kernel.d)
    rhs = drift_vector(G.space, G.kernel, l)
    n = G.space.size
    if n <= DENSE_LIMIT:
        A = lam * np.eye(n) - G.dense()
        f = scipy.linalg.solve(A, rhs, assume_a="sym")
        method = "dense"
    else:
        A = (lam * sp.identity(n, format="csr") - G.matrix).tocsr()
        precond = sp.diags(1.0 / A.diagonal())
        f, info = spla.cg(A, rhs, rtol=tol * 1e-3, atol=0.0, maxiter=20 * n, M=precond)
        if info != 0:
            raise SolverFailure(f"conjugate gradients did not converge (info={info})")
        method = "cg"
    residual = float(np.max(np.abs(lam * f - G.apply(f) - rhs), initial=0.0))
    if residual > tol:
        raise SolverFailure(f"resolvent residual {residual:.3e} exceeds {tol:.0e}")
    return ResolventSolution(lam=float(lam), direction=l, f=f, residual=residual, method=method)


@dataclass(frozen=True)
class MartingaleVariance:
    total: float
    exchange_part: float
    jump_part: float


def martingale_variance(f: np.ndarray, direction, space: StateSpace, kernel: TransitionKernel,
                        nu: MeasureVector) -> MartingaleVariance:
    """Unit-time variance of the walker martingale plus the resolvent martingale.

    ``2 D_se(f) + E_nu[sum_y c_{0,y} ((y.l) + f(tau_y eta) - f(eta))^2]``.
    """
    l = np.asarray(direction, dtype=float).reshape(kernel.d)
    exchange_part = 2.0 * dirichlet_form_sos(f, "se", space, kernel, nu)
    jump_part = 0.0
    for y, target, c in shift_maps(space, kernel):
        jump_part += nu.expect(c * (float(y @ l) + f[target] - f) ** 2)
    return MartingaleVariance(exchange_part + jump_part, exchange_part, jump_part)


def bare_variance_rate(space: StateSpace, kernel: TransitionKernel, nu: MeasureVector, direction) -> float:
    """``E_nu[sum_y (y.l)^2 c_{0,y}]``: variance rate of the walker's own martingale."""
    l = np.asarray(direction, dtype=float).reshape(kernel.d)
    return float(sum(float(y @ l) ** 2 * nu.expect(c.astype(float)) for y, _, c in shift_maps(space, kernel)))


def richardson_limit(lams: Sequence[float], values: Sequence[float]) -> float:
    """Polynomial (Neville) extrapolation of ``values(lam)`` to ``lam = 0``."""
    x = list(map(float, lams))
    p = list(map(float, values))
    n = len(x)
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            p[i] = (x[i] * p[i - 1] - x[i - j] * p[i]) / (x[i] - x[i - j])
    return p[-1]


def geometric_lambdas(k_max: int = 20) -> tuple[float, ...]:
    return tuple(2.0 ** -k for k in range(k_max + 1))


@dataclass
class VarianceExtrapolation:
    direction: np.ndarray
    lambdas: np.ndarray
    sigma2: np.ndarray
    exchange_parts: np.ndarray
    jump_parts: np.ndarray
    one_norms: np.ndarray
    limit: float
    stabilized: bool
    monotone: bool
    params: dict = field(default_factory=dict)

    def predicted_rate(self, t: float | None = None) -> float:
        """Asymptotic ``Var(X_t . l) / t``."""
        return self.limit


def variance_extrapolate(direction, lambdas: Sequence[float], G: GeneratorMatrix, nu: MeasureVector,
                         tail: int = 5, rel_tol: float = 0.01, strict: bool = False) -> VarianceExtrapolation:
    """Evaluate the resolvent martingale variance along ``lambdas`` and extrapolate to zero.

    ``stabilized`` is False when the last two iterates differ by more than
    ``rel_tol`` (relative); with ``strict`` that raises :class:`NonStabilized`.
    """
    if len(lambdas) == 0:
        raise ValueError("empty lambda schedule")
    l = np.asarray(direction, dtype=float).reshape(G.kernel.d)
    lams = np.asarray(sorted(map(float, lambdas), reverse=True))
    sig, ex, jp, norms = [], [], [], []
    for lam in lams:
        sol = solve_resolvent(lam, l, G, nu)
        mv = martingale_variance(sol.f, l, G.space, G.kernel, nu)
        sig.append(mv.total)
        ex.append(mv.exchange_part)
        jp.append(mv.jump_part)
        norms.append(dirichlet_form(sol.f, G, nu))
    sig = np.array(sig)
    k = min(tail, len(lams))
    limit = richardson_limit(lams[-k:], sig[-k:]) if k > 1 else float(sig[-1])
    if len(sig) > 1:
        gap = abs(sig[-1] - sig[-2])
        stabilized = bool(gap <= rel_tol * abs(sig[-1]) or gap <= 1e-12)
    else:
        stabilized = True
    steps = np.diff(sig)
    monotone = bool(np.all(steps <= 1e-12) or np.all(steps >= -1e-12))
    params = {"d": G.torus.d, "L": G.torus.L, "R": G.kernel.R,
              "kernel": [[list(y), p] for y, p in G.kernel.weights], "rho": nu.rho}
    result = VarianceExtrapolation(l, lams, sig, np.array(ex), np.array(jp), np.array(norms),
                                   float(limit), stabilized, monotone, params)
    if strict and not stabilized:
        raise NonStabilized(f"last iterates {sig[-2]:.6g}, {sig[-1]:.6g} differ by more than {rel_tol:.0%}")
    return result


@dataclass(frozen=True)
class InequalityReport:
    lam: float
    dirichlet_ew: float
    dirichlet_se: float
    pairing: float
    ratio: float
    first_holds: bool


def check_inequality_chain(solution: ResolventSolution, G: GeneratorMatrix, nu: MeasureVector,
                           tol: float = 1e-12) -> InequalityReport:
    """``D_ew(f) <= |<phi.l, f>|`` and the ratio ``|<phi.l, f>| / D_se(f)^(1/2)``."""
    f = solution.f
    phi = drift_vector(G.space, G.kernel, solution.direction)
    pairing = abs(nu.inner(phi, f))
    d_ew = dirichlet_form_sos(f, "ew", G.space, G.kernel, nu)
    d_se = dirichlet_form_sos(f, "se", G.space, G.kernel, nu)
    ratio = pairing / math.sqrt(d_se) if d_se > 0 else math.nan
    return InequalityReport(solution.lam, d_ew, d_se, pairing, ratio, bool(d_ew <= pairing + tol))


def ratio_bounded(ratios: Sequence[float], tail: int = 5, growth: float = 0.10) -> bool:
    """The last ``tail`` ratios are finite and do not all grow by more than ``growth`` per step."""
    r = np.asarray(ratios[-tail:], dtype=float)
    if r.size == 0 or not np.all(np.isfinite(r)):
        return False
    if r.size < 2:
        return True
    return not bool(np.all(r[1:] > (1.0 + growth) * r[:-1]))


def exchange_path_bound(f: np.ndarray, space: StateSpace, kernel: TransitionKernel, nu: MeasureVector
                        ) -> list[tuple[int, int, float, float]]:
    """For every ordered pair ``(a, b = a + y)`` return
    ``(a, b, |E_nu[(eta(b) - eta(a)) f]|, p(y)^{-1/2} D_se(f)^{1/2})``."""
    d_se = dirichlet_form_sos(f, "se", space, kernel, nu)
    nbr = space.torus.neighbor_table(kernel)
    out = []
    for a in range(space.n_sites):
        for k, p in enumerate(kernel.rates):
            b = int(nbr[a, k])
            lhs = abs(nu.expect((space.occupation(b) - space.occupation(a)) * f))
            out.append((a, b, lhs, math.sqrt(d_se / p)))
    return out


@dataclass(frozen=True)
class ExactVariance:
    t: float
    direction: np.ndarray
    mean: float
    variance: float
    params: dict = field(default_factory=dict)

    def predicted_rate(self, t: float | None = None) -> float:
        if t is not None and not math.isclose(t, self.t, rel_tol=1e-12):
            raise ValueError(f"exact variance was computed at t={self.t}, not t={t}")
        return self.variance / self.t


def exact_variance(t: float, direction, G: GeneratorMatrix, nu: MeasureVector) -> ExactVariance:
    """Exact ``Var_nu(X_t . l)`` of the walker started from ``eta_0 ~ nu``.

    Uses the backward equations for ``m1(eta) = E_eta[X_t . l]`` and
    ``m2(eta) = E_eta[(X_t . l)^2]``::

        m1' = G m1 + phi.l
        m2' = G m2 + sum_y c_{0,y} (2 (y.l) m1(tau_y eta) + (y.l)^2)

    integrated exactly with a matrix exponential of the augmented system.
    """
    space, kernel = G.space, G.kernel
    l = np.asarray(direction, dtype=float).reshape(kernel.d)
    n = space.size
    idx = space.states
    coupling_rows, coupling_cols, coupling_vals = [], [], []
    source2 = np.zeros(n)
    for y, target, c in shift_maps(space, kernel):
        yl = float(y @ l)
        on = c == 1
        coupling_rows.append(idx[on])
        coupling_cols.append(target[on])
        coupling_vals.append(np.full(int(on.sum()), 2.0 * yl))
        source2 += c * yl ** 2
    C = sp.coo_matrix((np.concatenate(coupling_vals), (np.concatenate(coupling_rows), np.concatenate(coupling_cols))),
                      shape=(n, n)).tocsr()
    phi = drift_vector(space, kernel, l)
    source = np.concatenate([phi, source2])[:, None]
    B = sp.bmat([[G.matrix, None, sp.csr_matrix(source[:n])],
                 [C, G.matrix, sp.csr_matrix(source[n:])],
                 [None, None, sp.csr_matrix((1, 1))]], format="csc")
    start = np.zeros(2 * n + 1)
    start[-1] = 1.0
    u = spla.expm_multiply(B * float(t), start)
    m1, m2 = u[:n], u[n:2 * n]
    mean = nu.expect(m1)
    params = {"d": G.torus.d, "L": G.torus.L, "R": kernel.R,
              "kernel": [[list(y), p] for y, p in kernel.weights], "rho": nu.rho}
    return ExactVariance(float(t), l, mean, nu.expect(m2) - mean ** 2, params)


def variance_identity(solution: ResolventSolution, G: GeneratorMatrix, nu: MeasureVector) -> float:
    """Closed form ``E[c (y.l)^2] - 4 <phi.l, f> + 2 D_ew(f)`` of the martingale variance.

    Follows from ``E[sum_y c_{0,y} (y.l) (f(tau_y eta) - f(eta))] = -2 <phi.l, f>``
    (translation invariance of ``nu``); an independent check on
    :func:`martingale_variance`.
    """
    phi = drift_vector(G.space, G.kernel, solution.direction)
    bare = bare_variance_rate(G.space, G.kernel, nu, solution.direction)
    return bare - 4.0 * nu.inner(phi, solution.f) + 2.0 * dirichlet_form(solution.f, G, nu)
