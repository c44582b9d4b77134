"""The eight acceptance criteria, each at its stated tolerance.

The large campaigns (L=512, T=1e4, 500 replicas, coupled and tagged) run
once per session through the command-line interface; expect a few minutes.
A pass/fail line per criterion is printed in the terminal summary.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from exclusim import checks, io, oracle, stats
from exclusim.cli import analyze, main
from exclusim.config import load_oracle_plan
from exclusim.lattice import Torus, uniform_kernel
from exclusim.report import all_passed, to_text

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
L1 = [1.0]


def record(number, passed, detail):
    prev = ACCEPTANCE.get(number)
    if prev is not None:
        passed = passed and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def simulate(config, out, *extra):
    assert main(["simulate", "--config", str(CONFIGS / config), "--out", str(out), *extra]) == 0
    return {p.name: p for p in Path(out).glob("*.csv")}


def only(files, prefix):
    (path,) = [p for name, p in files.items() if name.startswith(prefix)]
    return path


@pytest.fixture(scope="session")
def campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("campaign")
    coupled = only(simulate("coupled.cfg", out), "coupled")
    assert main(["tagged", "--config", str(CONFIGS / "tagged.cfg"), "--out", str(out)]) == 0
    tagged = only({p.name: p for p in out.glob("*.csv")}, "tagged")
    return {"dir": out, "coupled": coupled, "tagged": tagged,
            "coupled_ens": io.read_ensemble(coupled), "tagged_ens": io.read_ensemble(tagged)}


@pytest.fixture(scope="session")
def small_torus(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    path = only(simulate("small_torus.cfg", out), "coupled")
    return {"dir": out, "path": path, "ens": io.read_ensemble(path)}


@pytest.fixture(scope="session")
def degenerate(tmp_path_factory):
    out = tmp_path_factory.mktemp("degenerate")
    files = simulate("degenerate.cfg", out)
    return {"dir": out, "empty": io.read_ensemble(only(files, "coupled_d1_L64_rho0.0")),
            "full": io.read_ensemble(only(files, "coupled_d1_L64_rho1.0"))}


def test_criterion_1_oracle_identities(tmp_path):
    plan = load_oracle_plan((CONFIGS / "oracle.cfg").read_text())
    assert [t.L for t in plan.tori] == [4, 5, 6] and plan.rhos == [0.25, 0.5, 0.75]
    assert plan.lambdas == oracle.geometric_lambdas(20)
    code = main(["oracle", "--config", str(CONFIGS / "oracle.cfg"), "--out", str(tmp_path)])
    records = checks.oracle_suite(plan.tori, plan.kernel, plan.rhos, plan.directions, plan.lambdas,
                                  plan.random_functions, plan.seed)
    worst = {}
    for r in records:
        if r.test in ("reversibility", "stationarity", "dirichlet", "resolvent"):
            worst[r.test] = max(worst.get(r.test, 0.0), r.value)
    inequality = all(r.passed for r in records if r.quantity.startswith("D_ew(f) <="))
    ok = code == 0 and all_passed(records)
    record(1, ok, f"{len(records)} checks; reversibility {worst['reversibility']:.1e}, "
                  f"stationarity {worst['stationarity']:.1e}, Dirichlet {worst['dirichlet']:.1e}, "
                  f"resolvent residual {worst['resolvent']:.1e}, inequality for all lambda: {inequality}")
    assert ok, to_text([r for r in records if not r.passed])


def test_criterion_2_law_of_large_numbers(campaign):
    ens = campaign["coupled_ens"].take(np.arange(200))
    assert ens.n == 200 and ens.times[-1] == 1e4 and ens.params["L"] == 512
    rep = stats.drift_test(ens, L1)
    record(2, rep.passed, f"mean X_T/T = {rep.mean:.2e}, 3 SE = {3 * rep.se:.2e} (N=200)")
    assert rep.passed


def test_criterion_3_diffusive_scaling_and_gaussianity(campaign):
    ens = campaign["coupled_ens"]
    assert ens.n >= 500
    fit = stats.scaling_fit(stats.msd_curve(ens, L1), (1e2, 1e4))
    gauss = stats.gaussianity_test(ens, L1, 1e4)
    ok = fit.within(0.9, 1.1) and gauss.cdf_passed and gauss.kurtosis_passed
    record(3, ok, f"slope {fit.slope:.4f} +- {fit.slope_se:.4f}; sup-CDF {gauss.statistic:.4f} < "
                  f"{gauss.threshold:.4f}; excess kurtosis {gauss.kurtosis:.3f} +- {gauss.kurtosis_se:.3f}")
    assert fit.within(0.9, 1.1)
    assert gauss.passed, to_text(gauss.records())


def test_criterion_4_nondegeneracy_and_oracle_agreement(small_torus):
    ens = small_torus["ens"]
    G = oracle.build_generator(Torus(6, 1), uniform_kernel(1, 1), "ew")
    nu = oracle.bernoulli_measure(G.space, 0.5)
    ext = oracle.variance_extrapolate(L1, oracle.geometric_lambdas(20), G, nu)
    curve = stats.msd_curve(ens, L1)
    exact_1 = oracle.exact_variance(1.0, L1, G, nu)
    at_1 = stats.compare_oracle(curve, exact_1, 1.0)
    T = float(ens.times[-1])
    at_T = stats.compare_oracle(curve, ext, T)
    literal = stats.compare_oracle(curve, ext, 1.0)
    # Var(X_1) and sigma^2 differ on this torus; the literal pairing is reported, not gated
    print(f"INFO Var(X_1) = {at_1.mc_rate:.4f} vs sigma^2 = {ext.limit:.4f}: "
          f"{'within' if literal.passed else 'outside'} max(3 SE, 1%)")
    ok = ext.stabilized and ext.limit > 0 and at_1.passed and at_T.passed
    record(4, ok, f"sigma^2 = {ext.limit:.6f} (stabilized {ext.stabilized}); "
                  f"MC Var(X_1) {at_1.mc_rate:.4f} vs exact {at_1.oracle_rate:.4f} +- {at_1.tolerance:.4f}; "
                  f"MC Var(X_{T:g})/{T:g} {at_T.mc_rate:.4f} vs sigma^2 +- {at_T.tolerance:.4f} (N={ens.n})")
    assert ext.stabilized and ext.limit > 0
    assert at_1.passed and at_T.passed


def test_criterion_5_degenerate_densities(degenerate):
    empty, full = degenerate["empty"], degenerate["full"]
    frozen = not empty.X.any()
    curve = stats.msd_curve(full, L1)
    t = curve.times[1:]
    within = np.abs(curve.variance[1:] - 2 * t) <= 3 * curve.se[1:]
    G = oracle.build_generator(Torus(6, 1), uniform_kernel(1, 1), "ew")
    ext = oracle.variance_extrapolate(L1, oracle.geometric_lambdas(20), G, oracle.bernoulli_measure(G.space, 1.0))
    exact = abs(ext.limit - 2.0) < 1e-12 and np.all(np.abs(ext.sigma2 - 2.0) < 1e-12)
    ok = frozen and bool(within.all()) and exact
    record(5, ok, f"rho=0 X identically 0 over {empty.n} replicas: {frozen}; rho=1 Var within 3 SE of 2t at "
                  f"{int(within.sum())}/{within.size} times; oracle sigma^2 = {ext.limit!r}")
    assert ok


def test_criterion_6_tagged_contrast(campaign):
    records = (analyze(campaign["coupled_ens"], ["scaling"], window=(1e2, 1e4))
               + analyze(campaign["tagged_ens"], ["scaling"], window=(1e2, 1e4)))
    coupled, tagged = records
    separated = tagged.value < 0.6 < 0.9 <= coupled.value
    ok = coupled.passed and tagged.passed and separated
    print(to_text(records), end="")
    record(6, ok, f"tagged slope {tagged.value:.4f} in [0.4, 0.6]; coupled slope {coupled.value:.4f} >= 0.9")
    assert ok


def test_criterion_7_martingale_decomposition(campaign):
    ens = campaign["coupled_ens"]
    rho = ens.params["rho"]
    assert ens.n == 500 and rho == 0.5
    space = oracle.StateSpace(Torus(6, 1))
    nu = oracle.bernoulli_measure(space, rho)
    kernel = uniform_kernel(1, 1)
    bonds = [oracle.expected_bond(space, kernel, nu, k) for k in range(kernel.size)]
    cross = max(abs(b - rho ** 2) for b in bonds) < 1e-12
    rep = stats.martingale_test(ens, L1, bonds[0], kernel.second_moment(L1))
    ok = cross and rep.passed
    record(7, ok, f"mean (X-A)_T {rep.mean:.3f} +- {3 * rep.mean_se:.3f}; Var {rep.variance:.1f} vs "
                  f"T rho^2 sum(y.l)^2 = {rep.expected_variance:.1f} +- {3 * rep.variance_se:.1f}; "
                  f"oracle E[c] = {bonds[0]!r}")
    assert ok


def _same_bytes(a: Path, b: Path) -> bool:
    names = sorted(p.name for p in a.iterdir())
    return names == sorted(p.name for p in b.iterdir()) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)


def test_criterion_8_reproducibility(campaign, small_torus, degenerate, tmp_path):
    rerun = tmp_path / "coupled"
    simulate("coupled.cfg", rerun)
    originals = [p for p in campaign["dir"].iterdir() if p.name.startswith("coupled")]
    coupled_same = len(originals) == 2 and all((rerun / p.name).read_bytes() == p.read_bytes() for p in originals)
    simulate("small_torus.cfg", tmp_path / "small")
    small_same = _same_bytes(small_torus["dir"], tmp_path / "small")
    simulate("degenerate.cfg", tmp_path / "degenerate")
    degenerate_same = _same_bytes(degenerate["dir"], tmp_path / "degenerate")
    # a shorter tagged re-run must reproduce the leading replicas of the full file
    assert main(["tagged", "--config", str(CONFIGS / "tagged.cfg"), "--out", str(tmp_path / "tagged"),
                 "--replicas", "5"]) == 0
    head = (tmp_path / "tagged" / campaign["tagged"].name).read_bytes()
    tagged_prefix = campaign["tagged"].read_bytes().startswith(head)
    ok = coupled_same and small_same and degenerate_same and tagged_prefix
    record(8, ok, f"coupled campaign {coupled_same}, small torus {small_same}, degenerate {degenerate_same}, "
                  f"tagged prefix {tagged_prefix}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
