"""Monte Carlo scenarios, replicated experiments and benchmark metrics."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import METHODS, MODEL_KINDS, AteEstimate, CausalDataset, validate_dataset
from .estimators import (
    PencompConfig,
    aiptw_point,
    estimate_aiptw,
    estimate_dsm,
    estimate_imp,
    estimate_iptw,
    estimate_pencomp,
    estimate_tmle,
    imp_point,
    iptw_point,
    tmle_targeting,
)
from .inference import IntervalSpec, bootstrap_ci, replicate_seed
from .models.nuisance import fit_nuisances, select_covariates

log = logging.getLogger(__name__)

OVERLAPS = ("large", "small")
EFFECTS = ("homo", "hetero")
N_FEATURES = 9
MAX_FAIL_RATE = 0.05

# population mean and variance of each raw feature under X ~ N(0, I)
POPULATION_MOMENTS = (
    (math.exp(1 / 8), math.exp(1 / 2) - math.exp(1 / 4)),
    (math.exp(1 / 18), math.exp(2 / 9) - math.exp(1 / 9)),
    (1.0, 2.0),
    (1.0, 2.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 2.0),
    (2.0, 4.0),
    (0.0, 15.0),
)

PS_COEF = {
    "large": (-3.0 / 15, np.array([-1, 2, -3, 3, 2, 1, 0, 0, 0]) / 15),
    "small": (0.0, np.array([-8, 1.5, 0.5, -0.5, 2.5, -0.5, 0, 0, 0]) / 5),
}
Y0_COEF = (-2.0, np.array([1.5, -2, 1.5, 0, 0, 0, 2.5, -1, 1]))


@dataclass(frozen=True)
class ScenarioSpec:
    overlap: str = "large"
    effect: str = "homo"
    tau: float = 0.0
    n: int = 2000
    seed: int = 0
    standardize: str = "sample"

    def __post_init__(self):
        if self.overlap not in OVERLAPS:
            raise ValueError(f"overlap must be one of {OVERLAPS}")
        if self.effect not in EFFECTS:
            raise ValueError(f"effect must be one of {EFFECTS}")
        if self.n < 100:
            raise ValueError("n must be at least 100")
        if self.standardize not in ("sample", "population"):
            raise ValueError("standardize must be 'sample' or 'population'")

    @property
    def label(self) -> str:
        return f"{self.effect}-{self.overlap}"

    @classmethod
    def from_label(cls, label: str, **kw) -> "ScenarioSpec":
        """Parse ``"homo-large"`` style labels."""
        try:
            effect, overlap = label.split("-")
        except ValueError:
            raise ValueError(f"scenario label {label!r} is not of the form effect-overlap") from None
        return cls(overlap=overlap, effect=effect, **kw)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.overlap, self.effect, self.tau, self.n, seed, self.standardize)


def raw_features(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.column_stack([
        np.exp(X[:, 0] / 2),
        np.exp(X[:, 1] / 3),
        X[:, 2] ** 2,
        X[:, 3] ** 2,
        X[:, 4],
        X[:, 5],
        X[:, 6] + X[:, 7],
        X[:, 6] ** 2 + X[:, 7] ** 2,
        X[:, 8] ** 3,
    ])


def standardize_features(W: np.ndarray, mode: str = "sample") -> np.ndarray:
    if mode == "sample":
        return (W - W.mean(axis=0)) / W.std(axis=0)
    mean = np.array([m for m, _ in POPULATION_MOMENTS])
    sd = np.sqrt([v for _, v in POPULATION_MOMENTS])
    return (W - mean) / sd


def propensity_linear_predictor(W: np.ndarray, overlap: str) -> np.ndarray:
    b0, b = PS_COEF[overlap]
    return b0 + W @ b


def potential_outcome_means(W: np.ndarray, effect: str, tau: float):
    """Noise-free ``(Y(0), Y(1))`` means given standardized features."""
    b0, b = Y0_COEF
    mu0 = b0 + W @ b
    if effect == "homo":
        return mu0, mu0 + tau
    return mu0, mu0 + tau + 5 * W[:, 0] + 3 * W[:, 2] + 2 * W[:, 0] * W[:, 2]


@dataclass
class Truth:
    y0: np.ndarray
    y1: np.ndarray
    W: np.ndarray
    e: np.ndarray

    @property
    def sample_ate(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def gen_dataset(spec: ScenarioSpec) -> tuple[CausalDataset, Truth]:
    """Draw one dataset; only the untransformed covariates are exposed for analysis."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, N_FEATURES))
    W = standardize_features(raw_features(X), spec.standardize)
    e = expit(propensity_linear_predictor(W, spec.overlap))
    A = (rng.random(spec.n) < e).astype(float)
    noise = rng.standard_normal(spec.n)
    mu0, mu1 = potential_outcome_means(W, spec.effect, spec.tau)
    y0 = mu0 + noise
    y1 = mu1 + noise
    Y = np.where(A == 1, y1, y0)
    names = tuple(f"X{j + 1}" for j in range(N_FEATURES))
    return validate_dataset(X, A, Y, names), Truth(y0, y1, W, e)


def true_ate_oracle(spec: ScenarioSpec, n_mc: int = 10 ** 6, seed: int = 0, return_se: bool = False):
    """Monte Carlo average of ``Y(1) - Y(0)`` over ``n_mc`` fresh units.

    The constant effect is returned exactly (standard error 0). The noise term
    cancels in the difference, so only the features are simulated.
    """
    if spec.effect == "homo":
        return (float(spec.tau), 0.0) if return_se else float(spec.tau)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((int(n_mc), N_FEATURES))
    W = standardize_features(raw_features(X), spec.standardize)
    mu0, mu1 = potential_outcome_means(W, spec.effect, spec.tau)
    diff = mu1 - mu0
    value = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(diff.size))
    return (value, se) if return_se else value


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    model_kind: str
    ci_variant: str
    bias: float
    mse: float
    coverage: float
    width: float
    type1: float
    var_ratio: float
    R: int
    valid: bool = True
    n_failed: int = 0


def compute_metrics(estimates, truth: float, R: int | None = None, n_failed: int = 0) -> MetricsRow:
    """Bias, MSE, coverage, mean width, type I error and variance ratio over replicates.

    Intervals are closed. Point-only estimates yield NaN interval metrics.
    ``R`` is the number of attempted replicates (defaults to ``len(estimates)``).
    """
    estimates = list(estimates)
    if len(estimates) < 2:
        raise ValueError("metrics need at least 2 estimates")
    first = estimates[0]
    pts = np.array([e.point for e in estimates])
    lo = np.array([e.ci_lo for e in estimates])
    hi = np.array([e.ci_hi for e in estimates])
    se = np.array([e.se for e in estimates])
    err = pts - truth
    bias = float(err.mean())
    mse = float(np.mean(err ** 2))
    if first.variance_source == "none":
        coverage = width = type1 = var_ratio = math.nan
    else:
        coverage = float(np.mean((lo <= truth) & (truth <= hi)))
        type1 = float(np.mean((lo > 0) | (hi < 0)))
        width = float(np.mean(hi - lo))
        var_b = float(pts.var(ddof=1))
        var_m = float(np.mean(se ** 2))
        var_ratio = var_m / var_b if var_b > 0 else (1.0 if var_m == 0 else math.inf)
    R = len(estimates) if R is None else R
    valid = n_failed <= MAX_FAIL_RATE * R
    return MetricsRow(first.method, first.model_kind, ci_variant(first), bias, mse, coverage, width, type1,
                      var_ratio, R, valid, n_failed)


def ci_variant(est: AteEstimate) -> str:
    return est.variance_source


@dataclass(frozen=True)
class EstimateRecord:
    replicate: int
    estimate: AteEstimate


@dataclass
class ReplicationResult:
    spec: ScenarioSpec
    truth: float
    metrics: list
    records: list
    failures: dict = field(default_factory=dict)

    def cell(self, estimator: str, model_kind: str, variant: str) -> MetricsRow:
        for row in self.metrics:
            if (row.estimator, row.model_kind, row.ci_variant) == (estimator, model_kind, variant):
                return row
        raise KeyError((estimator, model_kind, variant))


@dataclass(frozen=True)
class RunOptions:
    estimators: tuple = METHODS
    model_kinds: tuple = ("glm",)
    B: int = 0
    level: float = 0.95
    fluctuation: str = "shared"
    pencomp_B: int | None = None
    wild_B: int | None = None
    select: bool = True

    def __post_init__(self):
        bad = [m for m in self.estimators if m not in METHODS]
        if bad:
            raise ValueError(f"unknown estimators {bad}")
        bad = [k for k in self.model_kinds if k not in MODEL_KINDS]
        if bad:
            raise ValueError(f"unknown model kinds {bad}")
        if self.B < 0:
            raise ValueError("B must be non-negative")


PLUGIN = ("imp", "iptw", "aiptw", "tmle")


def expected_variants(method: str, B: int) -> tuple[str, ...]:
    """Interval variants emitted per estimator for a given bootstrap size."""
    base = {"imp": "none", "iptw": "none", "aiptw": "analytic", "tmle": "analytic",
            "dsm": "wild_bootstrap", "pencomp": "rubin"}[method]
    if method in PLUGIN and B >= 2:
        return (base, "bootstrap")
    return (base,)


def _plugin_recipe(kind: str, selected, methods, fluctuation: str):
    def recipe(boot: CausalDataset, seed: int):
        nuis = fit_nuisances(boot, kind, selected, seed)
        out = []
        for m in methods:
            if m == "imp":
                out.append(imp_point(boot, nuis))
            elif m == "iptw":
                out.append(iptw_point(boot, nuis))
            elif m == "aiptw":
                out.append(aiptw_point(boot, nuis))
            else:
                out.append(tmle_targeting(boot, nuis, fluctuation).tau)
        return out

    return recipe


def analyze_dataset(data: CausalDataset, opts: RunOptions, seed: int, selected=None):
    """Run the selection, nuisance and estimator pipeline on one dataset.

    Returns ``(estimates, failures, diagnostics)`` where ``estimates`` maps
    ``(method, model_kind, variant)`` to an :class:`AteEstimate` and
    ``failures`` lists the cells that raised.
    """
    s_sel, s_kinds = (int(s) for s in np.random.SeedSequence([int(seed), 1]).generate_state(2))
    if selected is None:
        selected = select_covariates(data, seed=s_sel) if opts.select else np.arange(data.p)
    selected = np.asarray(selected, dtype=int)
    out, failures, diagnostics = {}, [], {"selected": selected, "nuisances": {}}
    for k, kind in enumerate(opts.model_kinds):
        s_fit, s_boot, s_dsm, s_pen = (int(s) for s in np.random.SeedSequence([s_kinds, k]).generate_state(4))
        try:
            nuis = fit_nuisances(data, kind, selected, s_fit)
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.debug("nuisance fit failed for %s: %s", kind, exc)
            failures.extend((m, kind, v) for m in opts.estimators for v in expected_variants(m, opts.B))
            continue
        diagnostics["nuisances"][kind] = nuis
        for m in opts.estimators:
            try:
                if m == "imp":
                    est = estimate_imp(data, nuis, opts.level)
                elif m == "iptw":
                    est = estimate_iptw(data, nuis, opts.level)
                elif m == "aiptw":
                    est = estimate_aiptw(data, nuis, opts.level)
                elif m == "tmle":
                    est = estimate_tmle(data, nuis, opts.level, opts.fluctuation)
                elif m == "dsm":
                    wild_B = opts.wild_B or (opts.B if opts.B >= 2 else 500)
                    est = estimate_dsm(data, nuis, B=wild_B, seed=s_dsm, level=opts.level)
                else:
                    pen_B = opts.pencomp_B or (opts.B if opts.B >= 2 else PencompConfig.B)
                    est = estimate_pencomp(data, kind, selected, PencompConfig(B=pen_B, seed=s_pen), opts.level)
                out[(m, kind, est.variance_source)] = est
            except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                log.debug("%s/%s failed: %s", m, kind, exc)
                failures.append((m, kind, expected_variants(m, 0)[0]))
        boot_methods = [m for m in opts.estimators if m in PLUGIN]
        if opts.B >= 2 and boot_methods:
            recipe = _plugin_recipe(kind, selected, boot_methods, opts.fluctuation)
            try:
                res = bootstrap_ci(data, recipe, IntervalSpec(opts.level, opts.B), s_boot)
            except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                log.debug("bootstrap failed for %s: %s", kind, exc)
                failures.extend((m, kind, "bootstrap") for m in boot_methods)
                continue
            se, lo, hi = (np.atleast_1d(v) for v in (res.se, res.ci_lo, res.ci_hi))
            for j, m in enumerate(boot_methods):
                base = out.get((m, kind, expected_variants(m, 0)[0]))
                if base is None:
                    failures.append((m, kind, "bootstrap"))
                    continue
                out[(m, kind, "bootstrap")] = AteEstimate(m, kind, base.point, float(se[j]), float(lo[j]),
                                                          float(hi[j]), opts.level, "bootstrap", base.flags)
    return out, failures, diagnostics


def _run_one(args):
    spec, opts, seed, r = args
    data, _ = gen_dataset(spec.with_seed(replicate_seed(seed, 2 * r)))
    est, failures, _ = analyze_dataset(data, opts, replicate_seed(seed, 2 * r + 1))
    return r, est, failures


def run_replications(spec: ScenarioSpec, estimators=METHODS, model_kinds=("glm",), R: int = 10, B: int = 0,
                     seed: int = 0, level: float = 0.95, workers: int = 1, truth: float | None = None,
                     **options) -> ReplicationResult:
    """Replicate the full analysis pipeline ``R`` times and aggregate metrics per cell.

    Replicate ``r`` depends only on ``(seed, r)``, so results do not depend on
    ``workers``. Cells with more than 5% failed replicates are marked invalid.
    """
    if R < 2:
        raise ValueError("R must be at least 2")
    opts = RunOptions(tuple(estimators), tuple(model_kinds), B, level, **options)
    if truth is None:
        truth = true_ate_oracle(spec)
    jobs = [(spec, opts, seed, r) for r in range(R)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda t: t[0])

    cells = [(m, k, v) for k in opts.model_kinds for m in opts.estimators for v in expected_variants(m, B)]
    per_cell = {c: [] for c in cells}
    failures = {c: 0 for c in cells}
    records = []
    for r, est, failed in results:
        for c in failed:
            failures[c] = failures.get(c, 0) + 1
        for c in cells:
            if c in est:
                per_cell[c].append(est[c])
                records.append(EstimateRecord(r, est[c]))
    metrics = []
    for c in cells:
        ests = per_cell[c]
        if len(ests) >= 2:
            metrics.append(compute_metrics(ests, truth, R, failures[c]))
        else:
            nan = math.nan
            metrics.append(MetricsRow(c[0], c[1], c[2], nan, nan, nan, nan, nan, nan, R, False, failures[c]))
    return ReplicationResult(spec, truth, metrics, records, failures)
