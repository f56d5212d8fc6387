"""Command-line front end: ``simulate`` and ``analyze`` subcommands."""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .core import METHODS, MODEL_KINDS, CausalDataset, DataError, NonBinaryTreatment, validate_dataset
from .simulation import RunOptions, ScenarioSpec, analyze_dataset, run_replications

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FAILURES = 0, 2, 3, 4
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})
SCENARIOS = ("homo-large", "homo-small", "hetero-large", "hetero-small")

METRICS_HEADER = ("scenario", "estimator", "model_kind", "ci_variant", "bias", "mse", "coverage", "width",
                  "type1", "var_ratio", "R", "n_failed", "valid", "truth")
ESTIMATES_HEADER = ("scenario", "replicate", "estimator", "model_kind", "ci_variant", "point", "se", "ci_lo",
                    "ci_hi")
PS_QUANTILES = (0.0, 0.05, 0.5, 0.95, 1.0)
PS_COLUMNS = tuple(f"ps_{arm}_q{int(round(100 * q)):02d}" for arm in ("treated", "control") for q in PS_QUANTILES)
REPORT_HEADER = ("estimator", "model_kind", "ci_variant", "point", "se", "ci_lo", "ci_hi", "level",
                 "variance_source", "flags", "n", "n_dropped", "n_clamped") + PS_COLUMNS + ("selected",)


class ConfigError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(DataError):
    pass


def fmt(x) -> str:
    """Locale-independent, round-trippable text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def load_csv_dataset(path, outcome_col: str, treatment_col: str, covariate_cols=None):
    """Read a headed numeric CSV into a dataset.

    Rows with any missing cell in the used columns are dropped. Returns
    ``(dataset, n_dropped)``. Row numbers in errors count data rows from 0.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if covariate_cols is None:
            covariate_cols = [h for h in header if h not in (outcome_col, treatment_col)]
        used = [outcome_col, treatment_col, *covariate_cols]
        missing = [c for c in used if c not in header]
        if missing:
            raise MissingColumn(f"columns not found in {path}: {', '.join(missing)}")
        pos = [header.index(c) for c in used]
        rows, dropped = [], 0
        for r, line in enumerate(reader):
            if not line or all(not cell.strip() for cell in line):
                dropped += 1
                continue
            cells = [line[k].strip() if k < len(line) else "" for k in pos]
            if any(c.lower() in MISSING_TOKENS for c in cells):
                dropped += 1
                continue
            values = []
            for name, cell in zip(used, cells):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"row {r}, column {name!r}: cannot parse {cell!r} as a number",
                                     row=r, column=name) from None
            if values[1] not in (0.0, 1.0):
                raise NonBinaryTreatment(f"treatment value {cells[1]!r} at row {r} is not 0/1", row=r)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no complete rows")
    M = np.array(rows, dtype=float)
    data = validate_dataset(M[:, 2:], M[:, 1], M[:, 0], tuple(covariate_cols))
    return data, dropped


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def write_dataset_csv(path, data: CausalDataset, outcome_col: str = "Y", treatment_col: str = "A"):
    rows = ([Y, A, *x] for Y, A, x in zip(data.Y, data.A, data.X))
    write_csv(path, (outcome_col, treatment_col, *data.column_names), rows)


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    mode: str
    scenarios: tuple = ("homo-large",)
    n: int = 2000
    reps: int = 10
    boot: int = 0
    estimators: tuple = METHODS
    models: tuple = ("glm",)
    seed: int = 0
    level: float = 0.95
    out_dir: str = "."
    threads: int = 1
    tmle_eps: str = "shared"
    pencomp_boot: int = 0
    wild_boot: int = 0
    tau: float = 0.0
    standardize: str = "sample"
    no_select: bool = False
    data: str | None = None
    outcome_col: str = "Y"
    treatment_col: str = "A"
    covariate_cols: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("simulate", "analyze"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        bad = [e for e in self.estimators if e not in METHODS]
        if bad:
            raise ConfigError(f"unknown estimators: {', '.join(bad)}")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad:
            raise ConfigError(f"unknown model kinds: {', '.join(bad)}")
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad:
            raise ConfigError(f"unknown scenarios: {', '.join(bad)}")
        if self.reps < 1 or self.n < 1 or self.threads < 1:
            raise ConfigError("reps, n and threads must be positive")
        if self.boot < 0 or self.pencomp_boot < 0 or self.wild_boot < 0:
            raise ConfigError("bootstrap sizes must be non-negative")
        if self.mode == "simulate" and self.reps < 2:
            raise ConfigError("simulate needs reps >= 2")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.tmle_eps not in ("shared", "split"):
            raise ConfigError("tmle-eps must be 'shared' or 'split'")
        if self.mode == "analyze" and not self.data:
            raise ConfigError("analyze needs --data")

    def run_options(self) -> RunOptions:
        return RunOptions(self.estimators, self.models, self.boot, self.level, self.tmle_eps,
                          self.pencomp_boot or None, self.wild_boot or None, not self.no_select)


def _list(text: str) -> tuple:
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


CONFIG_KEYS = {
    "scenario": ("scenarios", lambda s: SCENARIOS if s.strip() == "all" else _list(s)),
    "n": ("n", int),
    "reps": ("reps", int),
    "boot": ("boot", int),
    "estimators": ("estimators", lambda s: METHODS if s.strip() == "all" else _list(s)),
    "models": ("models", lambda s: MODEL_KINDS if s.strip() == "all" else _list(s)),
    "seed": ("seed", int),
    "level": ("level", float),
    "out_dir": ("out_dir", str),
    "threads": ("threads", int),
    "tmle_eps": ("tmle_eps", str),
    "pencomp_boot": ("pencomp_boot", int),
    "wild_boot": ("wild_boot", int),
    "tau": ("tau", float),
    "standardize": ("standardize", str),
    "no_select": ("no_select", lambda s: s.strip().lower() in ("1", "true", "yes")),
    "data": ("data", str),
    "outcome_col": ("outcome_col", str),
    "treatment_col": ("treatment_col", str),
    "covariate_cols": ("covariate_cols", _list),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for k, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{k}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{k}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(mode: str, args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    raw = read_config_file(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            raw[key] = str(val) if not isinstance(val, bool) else "true"
    kw = {}
    for key, text in raw.items():
        field_name, conv = CONFIG_KEYS[key]
        try:
            kw[field_name] = conv(text)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {text!r}") from None
    try:
        return RunConfig(mode, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig, stream=sys.stdout) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    metric_rows, estimate_rows = [], []
    any_invalid = False
    opts = cfg.run_options()
    for label in cfg.scenarios:
        spec = ScenarioSpec.from_label(label, tau=cfg.tau, n=cfg.n, standardize=cfg.standardize)
        res = run_replications(spec, opts.estimators, opts.model_kinds, cfg.reps, cfg.boot, cfg.seed, cfg.level,
                               workers=cfg.threads, fluctuation=opts.fluctuation, pencomp_B=opts.pencomp_B,
                               wild_B=opts.wild_B, select=opts.select)
        for m in res.metrics:
            any_invalid |= not m.valid
            metric_rows.append((label, m.estimator, m.model_kind, m.ci_variant, m.bias, m.mse, m.coverage,
                                m.width, m.type1, m.var_ratio, m.R, m.n_failed, m.valid, res.truth))
        for rec in sorted(res.records, key=lambda t: t.replicate):
            e = rec.estimate
            estimate_rows.append((label, rec.replicate, e.method, e.model_kind, e.variance_source, e.point, e.se,
                                  e.ci_lo, e.ci_hi))
    write_csv(os.path.join(cfg.out_dir, "metrics.csv"), METRICS_HEADER, metric_rows)
    write_csv(os.path.join(cfg.out_dir, "estimates.csv"), ESTIMATES_HEADER, estimate_rows)
    print_table(stream, ("scenario", "estimator", "model", "ci", "bias", "mse", "cover", "width", "type1",
                         "var_ratio"), [r[:10] for r in metric_rows])
    if any_invalid:
        error_line("failure_rate", "one or more cells exceeded the replicate failure limit")
        return EXIT_FAILURES
    return EXIT_OK


def ps_quantiles(nuis, A) -> list:
    out = []
    for arm in (1.0, 0.0):
        out.extend(np.quantile(nuis.e_hat[A == arm], PS_QUANTILES))
    return out


def cmd_analyze(cfg: RunConfig, stream=sys.stdout) -> int:
    data, dropped = load_csv_dataset(cfg.data, cfg.outcome_col, cfg.treatment_col, cfg.covariate_cols)
    opts = cfg.run_options()
    est, failures, diag = analyze_dataset(data, opts, cfg.seed)
    selected = ";".join(data.column_names[j] for j in diag["selected"])
    rows = []
    for kind in opts.model_kinds:
        nuis = diag["nuisances"].get(kind)
        ps = ps_quantiles(nuis, data.A) if nuis is not None else [math.nan] * len(PS_COLUMNS)
        clamped = nuis.n_clamped if nuis is not None else 0
        for m in opts.estimators:
            for (mm, kk, variant), e in est.items():
                if (mm, kk) != (m, kind):
                    continue
                rows.append((m, kind, variant, e.point, e.se, e.ci_lo, e.ci_hi, e.level, e.variance_source,
                             ";".join(e.flags), data.n, dropped, clamped, *ps, selected))
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(os.path.join(cfg.out_dir, "ate_report.csv"), REPORT_HEADER, rows)
    print_table(stream, ("estimator", "model", "ci", "point", "se", "ci_lo", "ci_hi"), [r[:7] for r in rows])
    if dropped:
        print(f"dropped {dropped} incomplete rows", file=stream)
    if failures:
        error_line("estimation", "failed cells: " + ",".join("/".join(c) for c in failures))
        return EXIT_FAILURES
    return EXIT_OK


def print_table(stream, header, rows):
    cells = [[c if isinstance(c, str) else (f"{c:.4f}" if isinstance(c, float) else str(c)) for c in r]
             for r in rows]
    widths = [max([len(h)] + [len(r[k]) for r in cells]) for k, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)), file=stream)
    for r in cells:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)), file=stream)


def error_line(kind: str, message: str):
    print(f"error\t{kind}\t{message}", file=sys.stderr)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drate", description="Doubly robust ATE estimation toolkit.")
    sub = parser.add_subparsers(dest="mode", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--estimators", help="comma list from " + ",".join(METHODS) + " or 'all'")
    common.add_argument("--models", help="comma list from " + ",".join(MODEL_KINDS) + " or 'all'")
    common.add_argument("--boot", type=int, help="bootstrap replicates (0 disables the percentile bootstrap)")
    common.add_argument("--pencomp-boot", dest="pencomp_boot", type=int, help="PENCOMP imputations")
    common.add_argument("--wild-boot", dest="wild_boot", type=int, help="wild bootstrap draws for matching")
    common.add_argument("--seed", type=int)
    common.add_argument("--level", type=float)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--threads", type=int)
    common.add_argument("--tmle-eps", dest="tmle_eps", choices=("shared", "split"))
    common.add_argument("--no-select", dest="no_select", action="store_true",
                        help="skip Lasso screening and use every covariate")

    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo benchmark")
    sim.add_argument("--scenario", help="comma list from " + ",".join(SCENARIOS) + " or 'all'")
    sim.add_argument("--n", type=int)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--tau", type=float)
    sim.add_argument("--standardize", choices=("sample", "population"))

    ana = sub.add_parser("analyze", parents=[common], help="estimate the ATE on a CSV dataset")
    ana.add_argument("--data")
    ana.add_argument("--outcome-col", dest="outcome_col")
    ana.add_argument("--treatment-col", dest="treatment_col")
    ana.add_argument("--covariate-cols", dest="covariate_cols")
    return parser


def main(argv=None, stream=sys.stdout) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = build_config(args.mode, args)
        if cfg.mode == "simulate":
            return cmd_simulate(cfg, stream)
        return cmd_analyze(cfg, stream)
    except ConfigError as exc:
        error_line("config", str(exc))
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        error_line(type(exc).__name__, str(exc))
        return EXIT_DATA


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
