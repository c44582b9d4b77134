"""Command-line entry point: ``exclusim {simulate,tagged,oracle,analyze}``.

Exit status is 0 when every enabled check passes, 1 when a check fails and
2 for usage, configuration or input errors.
"""
from __future__ import annotations

import argparse
from pathlib import Path
import sys

import numpy as np

from . import __version__, checks, io, oracle, stats
from .config import Campaign, load_campaign, load_oracle_plan
from .dynamics import default_workers, run_ensemble
from .errors import ExclusimError, ParameterMismatch
from .lattice import Torus, build_kernel
from .report import Record, all_passed, to_csv, to_text

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
TESTS = ("drift", "msd", "scaling", "gaussianity", "martingale", "oracle", "asymptotic")
DEFAULT_TESTS = ("drift", "msd")
SLOPE_BANDS = {"coupled": (0.9, 1.1), "environment": (0.9, 1.1), "tagged": (0.4, 0.6)}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exclusim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"exclusim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("simulate", "run a simulation campaign"),
                            ("tagged", "run a campaign in tagged-particle mode")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--replicas", type=int, help="replica count (overrides the config)")

    p = sub.add_parser("oracle", help="run the exact small-torus verification suite")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int, help="seed for the random test functions")

    p = sub.add_parser("analyze", help="statistical tests on trajectory files")
    p.add_argument("inputs", nargs="+", type=Path, help="trajectory CSV files sharing parameters")
    p.add_argument("--tests", default=",".join(DEFAULT_TESTS),
                   help=f"comma-separated subset of {','.join(TESTS)}")
    p.add_argument("--out", type=Path)
    p.add_argument("--direction", help="projection vector, e.g. '1 0' (default e_1)")
    p.add_argument("--window", nargs=2, type=float, metavar=("LO", "HI"),
                   help="scaling fit window (default [T/100, T])")
    p.add_argument("--band", nargs=2, type=float, metavar=("LO", "HI"),
                   help="accepted slope band (default by mode)")
    p.add_argument("--time", type=float, help="Gaussianity sample time (default T)")
    p.add_argument("--oracle-time", type=float, default=1.0,
                   help="time of the exact finite-time variance comparison")
    return parser


def _write_report(records: list[Record], out: Path | None, stem: str):
    sys.stdout.write(to_text(records))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(to_csv(records))
        (out / f"{stem}.txt").write_text(to_text(records))


def cmd_simulate(args, mode: str | None = None) -> int:
    campaign = load_campaign(args.config.read_text(), seed=args.seed, replicas=args.replicas, mode=mode)
    args.out.mkdir(parents=True, exist_ok=True)
    workers = default_workers()
    for config in campaign.configs:
        trajectories = run_ensemble(config, campaign.replicas, campaign.master_seed, workers=workers)
        csv_path, manifest_path = io.write_trajectories(args.out / Campaign.point_name(config), trajectories,
                                                        campaign.master_seed)
        print(f"wrote {csv_path} ({len(trajectories)} replicas) and {manifest_path.name}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    plan = load_oracle_plan(args.config.read_text(), seed=args.seed)
    records = checks.oracle_suite(plan.tori, plan.kernel, plan.rhos, plan.directions, plan.lambdas,
                                  n_functions=plan.random_functions, seed=plan.seed)
    _write_report(records, args.out, "oracle_report")
    return EXIT_OK if all_passed(records) else EXIT_FAIL


def _kernel_of(params: dict):
    return build_kernel(params["d"], params["R"], {tuple(y): p for y, p in params["kernel"]})


def _small_torus(params: dict, kernel) -> Torus:
    # the bond expectation under a product measure does not depend on L
    return Torus(2 * kernel.R + 1, params["d"])


def analyze(ens: stats.Ensemble, tests, direction=None, window=None, band=None, time=None,
            oracle_time: float = 1.0) -> list[Record]:
    params = ens.params
    d = params["d"]
    l = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    kernel = _kernel_of(params)
    second = kernel.second_moment(l)
    T = float(ens.times[-1])
    rho = params["rho"]
    where = f"mode={params['mode']} L={params['L']} rho={rho!r} T={T!r} N={ens.n}"
    records: list[Record] = []

    def tagged(rs):
        return [Record(r.test, r.quantity, r.value, r.reference, r.tolerance, r.passed, where) for r in rs]

    curve = None
    if {"msd", "scaling", "oracle", "asymptotic"} & set(tests):
        curve = stats.msd_curve(ens, l)
    if "drift" in tests:
        records += tagged(stats.drift_test(ens, l).records())
    if "msd" in tests:
        for t, v, se in zip(curve.times[1:], curve.variance[1:], curve.se[1:]):
            if params["mode"] != "tagged" and rho == 1.0:
                ref, ok = second * t, abs(v - second * t) <= stats.N_SIGMA * se
            elif rho == 0.0:
                ref, ok = 0.0, v == 0.0
            else:
                ref, ok = float("nan"), bool(np.isfinite(v) and v >= 0)
            records.append(Record("msd", f"Var(X_t.l) at t={float(t)!r}", float(v), ref,
                                  stats.N_SIGMA * float(se), bool(ok), where))
    if "scaling" in tests:
        lo, hi = window if window is not None else (T / 100.0, T)
        report = stats.scaling_fit(curve, (lo, hi))
        blo, bhi = band if band is not None else SLOPE_BANDS[params["mode"]]
        records.append(Record("scaling", f"log-log slope on [{lo!r}, {hi!r}] (se {report.slope_se:.3g})",
                              report.slope, (blo + bhi) / 2, (bhi - blo) / 2, report.within(blo, bhi), where))
    if "gaussianity" in tests:
        records += tagged(stats.gaussianity_test(ens, l, T if time is None else time).records())
    if "martingale" in tests:
        space = oracle.StateSpace(_small_torus(params, kernel))
        nu = oracle.bernoulli_measure(space, rho)
        bonds = [oracle.expected_bond(space, kernel, nu, k) for k in range(kernel.size)]
        worst = max(abs(b - rho ** 2) for b in bonds)
        records.append(Record("martingale", "max |E[c_(0,y)] - rho^2| (oracle)", worst, 0.0, 1e-12,
                              worst < 1e-12, where))
        records += tagged(stats.martingale_test(ens, l, rho ** 2, second).records())
    if "oracle" in tests or "asymptotic" in tests:
        torus = Torus(params["L"], d)
        G = oracle.build_generator(torus, kernel, "ew")
        nu = oracle.bernoulli_measure(G.space, rho)
        if "oracle" in tests:
            exact = oracle.exact_variance(oracle_time, l, G, nu)
            records += tagged(stats.compare_oracle(curve, exact, oracle_time).records())
        if "asymptotic" in tests:
            ext = oracle.variance_extrapolate(l, oracle.geometric_lambdas(20), G, nu)
            records += tagged(stats.compare_oracle(curve, ext, T).records())
    return records


def cmd_analyze(args) -> int:
    tests = [t.strip() for t in args.tests.split(",") if t.strip()]
    unknown = sorted(set(tests) - set(TESTS))
    if unknown or not tests:
        raise ExclusimError(f"unknown tests {unknown}; choose from {','.join(TESTS)}")
    ensembles = [io.read_ensemble(p) for p in args.inputs]
    ens = io.combine(ensembles)
    direction = None
    if args.direction is not None:
        direction = [float(v) for v in args.direction.replace(",", " ").split()]
        if len(direction) != ens.d:
            raise ExclusimError(f"direction needs {ens.d} components")
    records = analyze(ens, tests, direction, args.window, args.band, args.time, args.oracle_time)
    _write_report(records, args.out, "analyze_report")
    return EXIT_OK if all_passed(records) else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "tagged":
            return cmd_simulate(args, mode="tagged")
        if args.command == "oracle":
            return cmd_oracle(args)
        return cmd_analyze(args)
    except (ExclusimError, ValueError, OSError, KeyError) as exc:
        kind = "parameter mismatch" if isinstance(exc, ParameterMismatch) else type(exc).__name__
        print(f"exclusim: {kind}: {exc}", file=sys.stderr)
        return EXIT_USAGE
