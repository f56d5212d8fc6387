"""Acceptance suite: one PASS/FAIL line per criterion.

Monte Carlo criteria take minutes; set ``DRATE_ACCEPT_BOOT=200`` to add the
percentile-bootstrap variant to the coverage check (hours on one core).
"""
import math
import os
from fractions import Fraction

import numpy as np
import pytest

from drate import ScenarioSpec, gen_dataset, validate_dataset
from drate.cli import main, write_dataset_csv
from drate.core import AteEstimate
from drate.estimators import (
    aiptw_point,
    aiptw_point_combined,
    dsm_fit,
    imp_point,
    iptw_point,
    match_on_scores,
    tmle_targeting,
)
from drate.inference import aiptw_ic_variance, aiptw_influence, replicate_seed, rubin_combine, tmle_ic_variance
from drate.models.superlearner import fit_superlearner
from drate.simulation import compute_metrics, expected_variants, run_replications, true_ate_oracle
from constants import HETERO_ATE, HETERO_ATE_SE
from helpers import nuisances, oracle_nuisances

RESULTS = {}
R_MC = 200


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        RESULTS[k] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def _random_problem(rng, n):
    A = np.r_[1.0, 0.0, (rng.random(n - 2) < 0.5)]
    d = validate_dataset(rng.standard_normal((n, 2)), A, rng.standard_normal(n) * 3)
    nu = nuisances(rng.uniform(0.02, 0.98, n), rng.standard_normal(n), rng.standard_normal(n))
    return d, nu


def test_criterion_1_exact_identities(report):
    rng = np.random.default_rng(101)
    worst = {}

    def track(name, gap):
        worst[name] = max(worst.get(name, 0.0), float(gap))

    for _ in range(50):
        d, nu = _random_problem(rng, int(rng.integers(4, 300)))
        zero = nuisances(nu.e_hat, np.zeros(d.n), np.zeros(d.n))
        track("aiptw_vs_iptw", abs(aiptw_point(d, zero) - iptw_point(d, zero)))
        track("tmle_eps0_vs_imp", abs(tmle_targeting(d, nu, "shared", epsilon=0.0).tau - imp_point(d, nu)))
        track("aiptw_two_forms", abs(aiptw_point(d, nu) - aiptw_point_combined(d, nu)))
        for M in (1, 2, 3):
            if min(d.A.sum(), d.n - d.A.sum()) >= M:
                ms = match_on_scores(d.A, rng.standard_normal((d.n, 3)), M)
                track("dsm_K_sum", abs(ms.K.sum() - d.n * M))
        ests = [AteEstimate("aiptw", "glm", p, 0.1, p - 0.2, p + 0.2) for p in rng.normal(0.3, 1, 12)]
        row = compute_metrics(ests, 0.1)
        pts = np.array([e.point for e in ests])
        R = len(pts)
        track("mse_identity", abs(row.mse - (row.bias ** 2 + (1 - 1 / R) * pts.var(ddof=1))))
    for family in ("gaussian", "binomial"):
        X = rng.standard_normal((300, 3))
        y = X[:, 0] + np.sin(2 * X[:, 1]) + rng.standard_normal(300) * 0.5
        if family == "binomial":
            y = (y > 0).astype(float)
        w = fit_superlearner(X, y, family, seed=3).weights
        track("sl_simplex", max(abs(w.sum() - 1), max(0.0, -w.min())))
    exact = ("aiptw_vs_iptw", "tmle_eps0_vs_imp", "dsm_K_sum")
    ok = all(worst[k] == 0 for k in exact) and all(worst[k] <= 1e-10 for k in worst)
    report(1, ok, ", ".join(f"{k} max gap {v:.1e}" for k, v in worst.items()))


def test_criterion_2_hand_oracles(report):
    F = Fraction
    checks = {}

    d = validate_dataset([[0.0], [1.0]], [1, 0], [5.0, 5.0])
    checks["imp [2,4]-[1,1] = 2"] = imp_point(d, nuisances([0.5, 0.5], [2, 4], [1, 1])) == 2.0

    d = validate_dataset([[0.0], [1.0]], [1, 0], [2.0, 1.0])
    checks["iptw two units = 1"] = iptw_point(d, nuisances([0.5, 0.5], [0, 0], [0, 0])) == 1.0

    # rearranged display evaluated in exact arithmetic: 3/(3/4) - (1/4)/(3/4)*2 - (1/4)/(1/4)*1
    e, y, m1, m0 = F(3, 4), F(3), F(2), F(1)
    unit = (y / e - (1 - e) / e * m1) - ((1 - e) / (1 - e) * m0)
    d = validate_dataset([[0.0], [1.0]], [1, 0], [3.0, 0.0])
    nu = nuisances([0.75, 0.5], [2, 0], [1, 0])
    got = aiptw_influence(d, nu, 0.0)[0]
    checks[f"aiptw single unit = {unit}"] = unit == F(7, 3) and abs(got - float(unit)) < 1e-14

    def term(a, y, e, m1, m0):
        return (a * y / e - (a - e) / e * m1) - ((1 - a) * y / (1 - e) + (a - e) / (1 - e) * m0)

    d = validate_dataset([[0.0], [1.0]], [1, 0], [3.0, 1.0])
    nu2 = nuisances([0.75, 0.5], [2, 2], [1, 1])
    units = [term(1, F(3), F(3, 4), 2, 1), term(0, F(1), F(1, 2), 2, 1)]
    tau = sum(units) / 2
    phi = [u - tau for u in units]
    se = math.sqrt(float(sum(p * p for p in phi))) / 2
    checks["aiptw IC two units"] = abs(aiptw_ic_variance(d, nu2, aiptw_point(d, nu2)) - se) < 1e-14

    d = validate_dataset([[0.0], [1.0]], [1, 0], [3.0, 1.0])
    # phi = 2*(3-2) + 0.5 - 0.5 and -2*(1-1.5) + 0.5 - 0.5
    checks["tmle IC two units"] = abs(
        tmle_ic_variance(d, nuisances([0.5, 0.5], [0, 0], [0, 0]), np.array([2.0, 2.0]),
                         np.array([1.5, 1.5]), 0.5) - math.sqrt(5) / 2) < 1e-14

    d = validate_dataset(np.zeros((4, 1)), [1, 1, 0, 0], [1.0, 2.5, 3.0, 7.0])
    nu = nuisances([0.3, 0.6, 0.3, 0.6], [1.0, 2.0, 1.0, 2.0], [0.5, 0.7, 0.5, 0.7])
    # pairs (0,2) and (1,3): (1-3) + (2.5-7) - (3-1) - (7-2.5) over 4
    checks["dsm four units = -13/4"] = abs(dsm_fit(d, nu).tau - (-13 / 4)) < 1e-14

    r = rubin_combine([1.0, 3.0], [0.0, 0.0])
    checks["rubin [1,3]: se = sqrt(3)"] = r.point == 2.0 and abs(r.total - 3) < 1e-14 and abs(r.se - math.sqrt(3)) < 1e-14

    row = compute_metrics([AteEstimate("imp", "glm", p, math.nan, math.nan, math.nan, 0.95, "none")
                           for p in (1.0, -1.0)], 0.0)
    checks["metrics [1,-1]: mse = 1"] = row.bias == 0.0 and row.mse == 1.0

    bad = [k for k, v in checks.items() if not v]
    detail = f"{len(checks) - len(bad)}/{len(checks)} hand cases"
    detail += "; failing: " + ", ".join(bad) if bad else "; aiptw unit value is 7/3 (a listed 5/3 needs 3/0.75 = 10/3)"
    report(2, not bad, detail)


def test_criterion_3_double_robustness(report):
    combos = {"ps_only": ("correct", "intercept"), "outcome_only": ("intercept", "correct")}
    pts = {(m, c): [] for m in ("aiptw", "tmle") for c in combos}
    iptw_bad = []
    for r in range(R_MC):
        data, truth = gen_dataset(ScenarioSpec("large", "homo", seed=replicate_seed(3003, r)))
        for c, (ps, out) in combos.items():
            nu = oracle_nuisances(data, truth, ps, out)
            pts["aiptw", c].append(aiptw_point(data, nu))
            pts["tmle", c].append(tmle_targeting(data, nu).tau)
            if c == "outcome_only":
                iptw_bad.append(iptw_point(data, nu))
    bias = {k: float(np.mean(v)) for k, v in pts.items()}
    b_iptw = float(np.mean(iptw_bad))
    ok = all(abs(b) < 0.1 for b in bias.values()) and abs(b_iptw) >= abs(bias["aiptw", "outcome_only"])
    detail = ", ".join(f"{m}/{c} bias {b:+.4f}" for (m, c), b in bias.items())
    report(3, ok, f"R={R_MC}: {detail}; iptw intercept-PS bias {b_iptw:+.4f}")


@pytest.mark.slow
def test_criterion_4_coverage(report):
    B = int(os.environ.get("DRATE_ACCEPT_BOOT", "0"))
    res = run_replications(ScenarioSpec("large", "homo"), ("aiptw", "tmle"), ("sl",), R=R_MC, B=B, seed=404)
    variants = ("analytic", "bootstrap") if B >= 2 else ("analytic",)
    parts, ok = [], True
    for m in ("aiptw", "tmle"):
        for v in variants:
            row = res.cell(m, "sl", v)
            ok &= row.valid and 0.91 <= row.coverage <= 0.99 and row.type1 <= 0.09
            parts.append(f"{m}/{v} coverage {row.coverage:.3f} type1 {row.type1:.3f} bias {row.bias:+.4f} "
                         f"var_ratio {row.var_ratio:.2f}")
    report(4, ok, f"R={R_MC}, B={B}: " + "; ".join(parts))


@pytest.mark.slow
def test_criterion_5_qualitative_ordering(report):
    dr = ("aiptw", "tmle", "dsm", "pencomp")
    res = run_replications(ScenarioSpec("large", "hetero"), ("imp",) + dr, ("glm", "sl"), R=R_MC, seed=505,
                           truth=HETERO_ATE, pencomp_B=3, wild_B=200)
    parts, ok = [], True
    for m in dr:
        variant = expected_variants(m, 0)[0]
        g, s = res.cell(m, "glm", variant), res.cell(m, "sl", variant)
        ok &= g.valid and s.valid and s.mse < g.mse
        parts.append(f"{m} mse sl {s.mse:.4f} < glm {g.mse:.4f}")
    gi, si = res.cell("imp", "glm", "none"), res.cell("imp", "sl", "none")
    ok &= abs(si.bias) < abs(gi.bias)
    parts.append(f"imp |bias| sl {abs(si.bias):.4f} < glm {abs(gi.bias):.4f}")
    report(5, ok, f"R={R_MC}: " + "; ".join(parts))


def test_criterion_6_oracle_constant(report):
    value, se = true_ate_oracle(ScenarioSpec("large", "hetero"), n_mc=10 ** 6, seed=606, return_se=True)
    gap = abs(value - HETERO_ATE)
    report(6, gap < 4 * HETERO_ATE_SE,
           f"frozen {HETERO_ATE:.6f} (se {HETERO_ATE_SE:.6f}), rerun {value:.6f} (se {se:.6f}), "
           f"gap {gap / HETERO_ATE_SE:.2f} se")


def test_criterion_7_cli_determinism(report, tmp_path):
    def simulate(tag, threads):
        out = tmp_path / tag
        code = main(["simulate", "--scenario", "homo-large,hetero-small", "--n", "400", "--reps", "4", "--boot", "5",
                     "--estimators", "all", "--models", "glm,gam", "--pencomp-boot", "3", "--wild-boot", "50",
                     "--seed", "77", "--threads", str(threads), "--out-dir", str(out)], stream=open(os.devnull, "w"))
        return code, {f: (out / f).read_bytes() for f in ("metrics.csv", "estimates.csv")}

    def analyze(tag, threads):
        out = tmp_path / tag
        code = main(["analyze", "--data", str(data_path), "--outcome-col", "Y", "--treatment-col", "A",
                     "--estimators", "all", "--models", "glm", "--boot", "5", "--pencomp-boot", "3",
                     "--wild-boot", "50", "--seed", "78", "--threads", str(threads), "--out-dir", str(out)],
                    stream=open(os.devnull, "w"))
        return code, (out / "ate_report.csv").read_bytes()

    data_path = tmp_path / "data.csv"
    write_dataset_csv(data_path, gen_dataset(ScenarioSpec("small", "hetero", n=500, seed=9))[0])
    runs = [simulate("s1", 1), simulate("s2", 1), simulate("s3", 3)]
    an = [analyze("a1", 1), analyze("a2", 1), analyze("a3", 3)]
    ok = all(c == 0 for c, _ in runs + an) and runs[0] == runs[1] == runs[2] and an[0] == an[1] == an[2]
    report(7, ok, "simulate and analyze outputs byte-identical across reruns and threads 1 vs 3")
