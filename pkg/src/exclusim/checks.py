"""The oracle verification suite: every exact identity the small-torus
generators must satisfy, as a list of :class:`~exclusim.report.Record`."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import oracle
from .lattice import Torus, TransitionKernel, make_rng
from .report import Record

MATRIX_TOL = 1e-12
IDENTITY_TOL = 1e-10
LARGE_LAMBDA = 1e6
LARGE_LAMBDA_TOL = 1e-4


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def generator_checks(torus: Torus, kernel: TransitionKernel, rho: float, n_functions: int = 100,
                     seed: int = 0) -> list[Record]:
    """Reversibility, stationarity and Dirichlet-form identities for one ``(L, rho)``."""
    family = oracle.generator_family(torus, kernel)
    space = family["ew"].space
    nu = oracle.bernoulli_measure(space, rho)
    where = f"L={torus.L} d={torus.d} rho={rho!r}"
    out = []
    for kind, G in family.items():
        rev = oracle.check_reversibility(G, nu)
        out.append(Record("reversibility", f"max flux asymmetry ({kind})", rev, 0.0, MATRIX_TOL,
                          rev < MATRIX_TOL, where))
        sta = oracle.check_stationarity(G, nu)
        out.append(Record("stationarity", f"max |nu G| ({kind})", sta, 0.0, MATRIX_TOL, sta < MATRIX_TOL, where))
        rows = float(np.max(np.abs(np.asarray(G.matrix.sum(axis=1)).ravel())))
        out.append(Record("generator", f"max row sum ({kind})", rows, 0.0, MATRIX_TOL, rows < MATRIX_TOL, where))
    split = float(np.max(np.abs((family["ew"].matrix - family["se"].matrix - family["rc"].matrix).data),
                         initial=0.0))
    out.append(Record("generator", "max |L_ew - L_se - L_rc|", split, 0.0, MATRIX_TOL, split < MATRIX_TOL, where))

    rng = make_rng(seed)
    decomposition = adjoint = sos = 0.0
    for _ in range(n_functions):
        f = rng.standard_normal(space.size)
        g = rng.standard_normal(space.size)
        forms = {k: oracle.dirichlet_form(f, G, nu) for k, G in family.items()}
        decomposition = max(decomposition, abs(forms["ew"] - forms["se"] - forms["rc"]))
        adjoint = max(adjoint, oracle.check_self_adjoint(family["ew"], nu, f, g))
        for kind in oracle.KINDS:
            sos = max(sos, abs(forms[kind] - oracle.dirichlet_form_sos(f, kind, space, kernel, nu)))
    out += [
        Record("dirichlet", f"max |D_ew - D_se - D_rc| over {n_functions} f", decomposition, 0.0,
               IDENTITY_TOL, decomposition < IDENTITY_TOL, where),
        Record("dirichlet", "max |<f, L g> - <L f, g>|", adjoint, 0.0, IDENTITY_TOL, adjoint < IDENTITY_TOL, where),
        Record("dirichlet", "max |<f, -L f> - sum of squares|", sos, 0.0, IDENTITY_TOL, sos < IDENTITY_TOL, where),
    ]
    for k, y in enumerate(kernel.displacements):
        bond = oracle.expected_bond(space, kernel, nu, k)
        out.append(Record("bond", f"E[c_(0,{tuple(int(v) for v in y)})]", bond, rho ** 2, MATRIX_TOL,
                          abs(bond - rho ** 2) < MATRIX_TOL, where))
    return out


def resolvent_checks(torus: Torus, kernel: TransitionKernel, rho: float, direction,
                     lambdas: Sequence[float]) -> list[Record]:
    """Resolvent residuals, the energy inequality chain and the variance
    extrapolation along ``lambdas`` for one ``(L, rho, l)``."""
    G = oracle.build_generator(torus, kernel, "ew")
    space = G.space
    nu = oracle.bernoulli_measure(space, rho)
    l = np.asarray(direction, dtype=float)
    where = f"L={torus.L} d={torus.d} rho={rho!r} l={tuple(float(v) for v in l)}"
    phi = oracle.drift_vector(space, kernel, l)
    second = kernel.second_moment(l)
    out = [Record("drift", "E[phi.l]", abs(nu.expect(phi)), 0.0, MATRIX_TOL, abs(nu.expect(phi)) < MATRIX_TOL,
                  where)]
    bare = oracle.bare_variance_rate(space, kernel, nu, l)
    out.append(Record("bare_rate", "E[sum c (y.l)^2]", bare, rho ** 2 * second, MATRIX_TOL,
                      abs(bare - rho ** 2 * second) < MATRIX_TOL, where))

    worst = {"residual": 0.0, "pairing": 0.0, "variance": 0.0, "energy": 0.0, "path": -math.inf}
    first_ok = True
    ratios = []
    for lam in sorted(map(float, lambdas), reverse=True):
        sol = oracle.solve_resolvent(lam, l, G, nu)
        worst["residual"] = max(worst["residual"], sol.residual)
        chain = oracle.check_inequality_chain(sol, G, nu)
        first_ok &= chain.first_holds
        ratios.append(chain.ratio)
        # <phi.l, f> = lam |f|^2 + D_ew(f)
        pairing = nu.inner(phi, sol.f)
        worst["pairing"] = max(worst["pairing"],
                               _rel(pairing, lam * nu.inner(sol.f, sol.f) + chain.dirichlet_ew))
        mv = oracle.martingale_variance(sol.f, l, space, kernel, nu)
        worst["variance"] = max(worst["variance"], _rel(mv.total, oracle.variance_identity(sol, G, nu)))
        # quadratic variation of the resolvent martingale is twice the Dirichlet form
        qv = mv.exchange_part + sum(nu.expect(c * (sol.f[target] - sol.f) ** 2)
                                    for _, target, c in oracle.shift_maps(space, kernel))
        worst["energy"] = max(worst["energy"], _rel(qv, 2.0 * chain.dirichlet_ew))
        for _, _, lhs, rhs in oracle.exchange_path_bound(sol.f, space, kernel, nu):
            worst["path"] = max(worst["path"], lhs - rhs)
    out += [
        Record("resolvent", "max residual", worst["residual"], 0.0, IDENTITY_TOL,
               worst["residual"] < IDENTITY_TOL, where),
        Record("inequality", "D_ew(f) <= |<phi.l, f>| for every lambda", float(first_ok), 1.0, 0.0, first_ok, where),
        Record("inequality", "max rel |<phi.l,f> - lam|f|^2 - D_ew(f)|", worst["pairing"], 0.0, IDENTITY_TOL,
               worst["pairing"] < IDENTITY_TOL, where),
        Record("inequality", "max |E[(eta(b)-eta(a)) f]| - (D_se(f)/p)^(1/2)", worst["path"], 0.0, MATRIX_TOL,
               worst["path"] <= MATRIX_TOL, where),
        Record("variance", "max rel |sigma2 - closed form|", worst["variance"], 0.0, IDENTITY_TOL,
               worst["variance"] < IDENTITY_TOL, where),
        Record("variance", "max rel |E[M_f^2] - 2 D_ew(f)|", worst["energy"], 0.0, IDENTITY_TOL,
               worst["energy"] < IDENTITY_TOL, where),
    ]
    if 0.0 < rho < 1.0:
        bounded = oracle.ratio_bounded(ratios)
        out.append(Record("inequality", "|<phi.l,f>| / D_se(f)^(1/2) (last)", float(ratios[-1]), math.nan,
                          math.nan, bounded, where))

    big = oracle.solve_resolvent(LARGE_LAMBDA, l, G, nu)
    big_var = oracle.martingale_variance(big.f, l, space, kernel, nu).total
    dev = abs(big_var - bare) / bare if bare > 0 else abs(big_var)
    out.append(Record("variance", f"rel deviation from bare rate at lambda={LARGE_LAMBDA:g}", dev, 0.0,
                      LARGE_LAMBDA_TOL, dev < LARGE_LAMBDA_TOL, where))

    ext = oracle.variance_extrapolate(l, lambdas, G, nu)
    out.append(Record("variance", "lambda sequence stabilized", float(ext.stabilized), 1.0, 0.0,
                      ext.stabilized, where))
    if rho == 0.0:
        ok = abs(ext.limit) < IDENTITY_TOL
        ref = 0.0
    elif rho == 1.0:
        ok = abs(ext.limit - second) < IDENTITY_TOL
        ref = second
    else:
        ok = ext.limit > 0.0
        ref = 0.0
    out.append(Record("variance", "sigma2 limit", ext.limit, ref, IDENTITY_TOL if rho in (0.0, 1.0) else 0.0,
                      ok, where))
    return out


def oracle_suite(tori: Sequence[Torus], kernel: TransitionKernel, rhos: Sequence[float],
                 directions: Sequence, lambdas: Sequence[float], n_functions: int = 100,
                 seed: int = 0) -> list[Record]:
    records = []
    for torus in tori:
        for rho in rhos:
            records += generator_checks(torus, kernel, rho, n_functions, seed)
            for l in directions:
                records += resolvent_checks(torus, kernel, rho, l, lambdas)
    return records
