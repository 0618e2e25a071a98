"""JSON and CSV serialization of analysis results."""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

SCHEMA_VERSION = "1.0"

REPORT_CSV_COLUMNS = (
    "label",
    "method",
    "norm",
    "statistic",
    "p_raw",
    "p_adjusted",
    "correction",
    "p_corrected",
    "log2_p",
    "log10_p",
    "p_mc",
    "p_mc_std_err",
    "flags",
)


def _clean(obj):
    """Make numpy scalars and non-finite floats JSON friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def envelope(command, config, results):
    """Top-level report with schema version and the full run configuration."""
    return _clean({"schema_version": SCHEMA_VERSION, "command": command, "config": config, "results": results})


def to_json(payload):
    return json.dumps(payload, indent=2, sort_keys=False)


def log10_table(reports, labels):
    """Lower-triangular matrix of log10 p-values (None on and above the diagonal)."""
    k = len(labels)
    table = [[None] * k for _ in range(k)]
    for rep in reports:
        i, j = rep.pair
        p = rep.p_final
        table[j][i] = math.log10(p) if p > 0 else float("-inf")
    return table


def reports_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_CSV_COLUMNS)
    for rep in reports:
        d = rep.to_dict()
        mc = d["p_mc"] or {}
        w.writerow(
            [
                d["label"],
                d["method"],
                "" if rep.norm is None else rep.norm.label(),
                d["statistic"],
                d["p_raw"],
                d["p_adjusted"],
                d["correction"],
                "" if d["p_corrected"] is None else d["p_corrected"],
                d["log2_p"],
                d["log10_p"],
                mc.get("p_hat", ""),
                mc.get("std_err", ""),
                ";".join(d["flags"]),
            ]
        )
    return buf.getvalue()


def table_csv(table, labels):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(labels))
    for lab, row in zip(labels, table):
        w.writerow([lab] + ["" if v is None else v for v in row])
    return buf.getvalue()


def plot_csv(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()
