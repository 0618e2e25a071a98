"""Command-line front end.

Subcommands: two-sample, ksample, latin, crbd, simulate, benchmark. Every
report embeds its full configuration (including the seed) so that rerunning
it reproduces the statistical fields exactly.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import run_benchmark
from .bounds import BoundConfig
from .designs import DesignLayout, crbd_test, latin_square_stepdown, oneway_analysis
from .errors import CalibrationError, DomainError, KKPermError
from .ingest import LabeledSample, load_sample
from .linalg import NormSpec
from .report import (
    REPORT_CSV_COLUMNS,
    envelope,
    log10_table,
    plot_csv,
    reports_csv,
    table_csv,
    to_json,
)
from .simulate import PLOT_COLUMNS, SCENARIOS

SEED_ENV = "KKPERM_SEED"

EPILOG = f"""\
Exit codes: 0 success, 2 usage, 3 parse error, 4 domain error,
5 degenerate data, 6 unsupported design, 7 calibration failure (only with
--strict; otherwise the raw bound is reported with a warning flag),
8 numeric failure.

Report CSV columns: {", ".join(REPORT_CSV_COLUMNS)}.
Plot CSV columns (simulate --plot-csv): {", ".join(PLOT_COLUMNS)}.
The default seed is read from ${SEED_ENV} when set; --seed overrides it.
"""


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise DomainError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _common(p, analysis=True):
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")
    p.add_argument("--output", choices=("json", "csv"), default="json")
    p.add_argument("--out", type=Path, default=None, help="write the report here instead of stdout")
    p.add_argument("--strict", action="store_true", help="exit non-zero when calibration fails")
    if analysis:
        p.add_argument("--input", type=Path, required=True)
        p.add_argument("--norm", choices=("l1", "l2", "linf", "s1", "s2", "sinf"), default=None)
        p.add_argument("--r", type=int, default=10, help="calibration draws")
        p.add_argument("--c", type=float, default=64.0, help="sub-Gaussian constant")
        p.add_argument("--mc", type=int, default=0, metavar="N", help="Monte-Carlo cross-check with N permutations")
        p.add_argument("--no-calibrate", action="store_true", help="report raw bounds only")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kkperm",
        description="Analytic permutation-test p-values from sub-Gaussian bounds with beta calibration.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"kkperm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("two-sample", help="two-sample test", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)

    p = sub.add_parser("ksample", help="pairwise and global k-sample tests", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--correction", choices=("none", "bonferroni", "holm"), default="none")
    p.add_argument("--table", type=Path, default=None, help="write the lower-triangular log10 table as CSV")

    p = sub.add_parser("latin", help="Latin-square stepdown (needs row and col columns)", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--center", action="store_true", help="remove row and column effects first")

    p = sub.add_parser("crbd", help="complete randomized block design (needs a block column)", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--correction", choices=("none", "bonferroni", "holm"), default="none")
    p.add_argument("--mode", choices=("means", "covariances"), default="means")
    p.add_argument("--group-size", type=int, default=None, help="curves per covariance operator (covariances mode)")
    p.add_argument("--table", type=Path, default=None)

    p = sub.add_parser("simulate", help="replication studies", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p, analysis=False)
    p.add_argument("scenario", choices=sorted(SCENARIOS))
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--grid", type=str, default=None, help="comma separated grid values")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--mc", type=int, default=None, metavar="N")
    p.add_argument("--q", type=str, default=None, help="norm exponent (number or inf)")
    p.add_argument("--kind", choices=("curves", "operators"), default="curves", help="null-calibration data type")
    p.add_argument("--plot-csv", type=Path, default=None)

    p = sub.add_parser("benchmark", help="analytic versus Monte-Carlo cost", epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p, analysis=False)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--per-cell", type=int, default=5)
    p.add_argument("--n-perms", type=int, default=132_000)
    p.add_argument("--measure-perms", type=int, default=3)
    p.add_argument("--r", type=int, default=10)
    return parser


# -- helpers -------------------------------------------------------------------


def _spec_for(sample: LabeledSample, flag):
    if sample.kind == "scalar":
        return None
    if sample.kind == "operator":
        spec = NormSpec.from_flag(flag or "s1")
        if spec.space != "schatten":
            raise DomainError(f"operators need a Schatten norm (s1, s2, sinf), got {flag}")
        return spec
    if flag and flag.startswith("s"):
        raise DomainError(f"{sample.kind} data need an l1, l2 or linf norm, got {flag}")
    return NormSpec.from_flag(flag or "l2", "function" if sample.kind == "curve" else "sequence")


def _config(args):
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("out",)}
    return cfg


def _bound_cfg(args):
    return BoundConfig.uniform(args.c, calibrate=not getattr(args, "no_calibrate", False))


def _emit(args, payload, csv_text):
    text = to_json(payload) if args.output == "json" else csv_text
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        args.out.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _strict_check(args, reports):
    if args.strict and any(any(f.startswith("calibration-failed") for f in rep.flags) for rep in reports if rep is not None):
        raise CalibrationError("calibration failed and --strict is set")


def _finish(args, command, results, reports, labels=None, table_path=None):
    _emit(args, envelope(command, _config(args), results), reports_csv([r for r in reports if r is not None]))
    if table_path is not None and labels is not None:
        pw = [r for r in reports if r is not None and r.pair is not None]
        table_path.write_text(table_csv(log10_table(pw, labels), labels), encoding="utf-8")
    _strict_check(args, reports)
    return 0


# -- commands ------------------------------------------------------------------


def cmd_two_sample(args):
    sample = load_sample(args.input)
    labels = sample.label_order()
    if len(labels) != 2:
        raise DomainError(f"two-sample needs exactly two labels, found {len(labels)}: {labels}")
    spec = _spec_for(sample, args.norm)
    pw, _ = oneway_analysis(sample.groups(), spec, _bound_cfg(args), "none", args.r, args.seed, args.mc, labels, with_global=False)
    results = {"labels": labels, "kind": sample.kind, "test": pw[0].to_dict()}
    return _finish(args, "two-sample", results, pw)


def cmd_ksample(args):
    sample = load_sample(args.input)
    labels = sample.label_order()
    spec = _spec_for(sample, args.norm)
    groups = sample.groups()
    balanced = len({len(g) for g in groups}) == 1
    pw, glob = oneway_analysis(groups, spec, _bound_cfg(args), args.correction, args.r, args.seed, args.mc, labels, with_global=balanced)
    results = {
        "labels": labels,
        "kind": sample.kind,
        "pairwise": [r.to_dict() for r in pw],
        "global": None if glob is None else glob.to_dict(),
        "log10_table": log10_table(pw, labels),
    }
    if not balanced:
        results["notes"] = ["global test skipped: groups are unbalanced"]
    return _finish(args, "ksample", results, pw + [glob], labels, args.table)


def _index(values):
    order = list(dict.fromkeys(values))
    return order, [order.index(v) for v in values]


def cmd_latin(args):
    sample = load_sample(args.input)
    if "row" not in sample.design or "col" not in sample.design:
        raise DomainError("latin needs row and col design columns in the input")
    treatments, t_idx = _index(sample.labels)
    rows, r_idx = _index(sample.design["row"])
    cols, c_idx = _index(sample.design["col"])
    k = len(treatments)
    if len(rows) != k or len(cols) != k or len(sample) != k * k:
        raise DomainError(f"a {k}x{k} Latin square needs {k} rows, {k} columns and {k * k} responses")
    square = np.full((k, k), -1)
    cell_item = {}
    for n, (i, j, t) in enumerate(zip(r_idx, c_idx, t_idx)):
        if (i, j) in cell_item:
            raise DomainError(f"duplicate cell (row {rows[i]}, col {cols[j]})")
        square[i, j] = t
        cell_item[(i, j)] = n
    layout = DesignLayout("latin-square", treatments, square)
    items = [sample.items[cell_item[(i, j)]] for i in range(k) for j in range(k)]
    spec = _spec_for(sample, args.norm)
    if args.center:
        arr = np.asarray([getattr(it, "values", it) for it in items], dtype=float)
        from .designs import center_by_design

        resid = center_by_design(arr.reshape((k, k) + arr.shape[1:]), layout).reshape(arr.shape)
        if sample.kind == "curve":
            from .linalg import GridCurve

            items = [GridCurve(items[0].grid, v) for v in resid]
        else:
            items = resid
    decisions = latin_square_stepdown(items, layout, spec, args.level, args.mc or None, args.r, _bound_cfg(args), args.seed)
    results = {
        "layout": layout.to_dict(),
        "rows": [str(r) for r in rows],
        "columns": [str(c) for c in cols],
        "mode": "monte-carlo" if args.mc else "analytic",
        "decisions": [d.to_dict() for d in decisions],
        "notes": [
            "factor statistic: sqrt of summed squared pairwise level-sum differences (implementation-defined)",
            "later stages permute within levels of rejected factors (implementation-defined)",
        ],
    }
    _emit(args, envelope("latin", _config(args), results), _latin_csv(decisions))
    if args.strict and any(any(f.startswith("calibration-failed") for f in d.flags) for d in decisions):
        raise CalibrationError("calibration failed and --strict is set")
    return 0


def _latin_csv(decisions):
    lines = ["factor,stage,decision,statistic,p_value,p_raw"]
    for d in decisions:
        lines.append(
            ",".join(
                str(v)
                for v in (d.factor, "" if d.stage is None else d.stage, d.decision, d.statistic, "" if d.p_value is None else d.p_value, "" if d.p_raw is None else d.p_raw)
            )
        )
    return "\n".join(lines) + "\n"


def cmd_crbd(args):
    sample = load_sample(args.input)
    if "block" not in sample.design:
        raise DomainError("crbd needs a block design column in the input")
    treatments = sample.label_order()
    blocks = list(dict.fromkeys(sample.design["block"]))
    cells = []
    for b in blocks:
        row = []
        for t in treatments:
            sel = [it for it, lab, bb in zip(sample.items, sample.labels, sample.design["block"]) if lab == t and bb == b]
            if not sel:
                raise DomainError(f"empty cell (treatment {t}, block {b})")
            row.append(sel if sample.kind == "curve" else np.asarray(sel, dtype=float))
        cells.append(row)
    spec = _spec_for(sample, args.norm)
    if args.mode == "covariances" and sample.kind != "operator":
        spec = NormSpec.from_flag(args.norm if args.norm and args.norm.startswith("s") else "s1")
    pw, glob = crbd_test(cells, spec, _bound_cfg(args), args.mode, args.correction, args.r, args.seed, args.mc, treatments, args.group_size)
    results = {
        "labels": treatments,
        "blocks": [str(b) for b in blocks],
        "kind": sample.kind,
        "mode": args.mode,
        "pairwise": [r.to_dict() for r in pw],
        "global": glob.to_dict(),
        "log10_table": log10_table(pw, treatments),
    }
    return _finish(args, "crbd", results, pw + [glob], treatments, args.table)


def cmd_simulate(args):
    fn = SCENARIOS[args.scenario]
    kw = {}
    if args.replicates is not None:
        kw["reps"] = args.replicates
    if args.r is not None and args.scenario != "uni-two-sample":
        kw["r"] = args.r
    if args.mc is not None and args.scenario != "null-calibration":
        kw["n_mc"] = args.mc
    if args.grid is not None:
        vals = [float(v) for v in args.grid.split(",") if v.strip()]
        key = {"uni-two-sample": "mu_grid", "uni-ksample": "shift_grid", "curves-mean": "shift_grid", "operators-procrustes": "gamma_grid"}.get(args.scenario)
        if key is None:
            raise DomainError(f"--grid does not apply to {args.scenario}")
        kw[key] = vals
    if args.q is not None:
        if args.scenario not in ("curves-mean", "null-calibration", "operators-procrustes"):
            raise DomainError(f"--q does not apply to {args.scenario}")
        kw["q"] = math.inf if args.q.lower() == "inf" else float(args.q)
    if args.scenario == "null-calibration":
        kw["kind"] = args.kind
    kw["seed"] = args.seed
    res = fn(**kw)
    rows = res.plot_rows()
    if args.plot_csv is not None:
        args.plot_csv.write_text(plot_csv(rows, PLOT_COLUMNS), encoding="utf-8")
    _emit(args, envelope("simulate", _config(args), res.to_dict()), plot_csv(rows, PLOT_COLUMNS))
    return 0


def cmd_benchmark(args):
    res = run_benchmark(args.d, args.k, args.blocks, args.per_cell, args.n_perms, args.r, args.seed, args.measure_perms)
    d = res.to_dict()
    text = "\n".join(f"{k},{v}" for k, v in d.items() if k != "pairwise_statistics") + "\n"
    _emit(args, envelope("benchmark", _config(args), d), "field,value\n" + text)
    return 0


COMMANDS = {
    "two-sample": cmd_two_sample,
    "ksample": cmd_ksample,
    "latin": cmd_latin,
    "crbd": cmd_crbd,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        return COMMANDS[args.command](args)
    except KKPermError as exc:
        print(f"kkperm: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
