"""Data ingestion, curve-to-operator grouping and synthetic data.

File formats (UTF-8, comma separated, LF or CRLF):

Curves::

    # rows=3                      (optional; guards against truncation)
    grid,0.0,0.5,1.0
    a,1.2,0.7,0.1
    b,0.9,0.8,0.3

With design metadata the header names the extra columns after ``grid``;
each row then carries them before the values::

    grid,row,col,block,0.0,0.5,1.0
    a,0,1,x,1.2,0.7,0.1

Vectors use ``vector`` in place of ``grid`` (the header cells after it are
coordinate names), and scalars use a ``scalar,value`` header with rows
``label,value``.

Operators::

    operator,a,dim=2
    1,0
    0,1

Lines starting with ``#`` are comments, except ``# rows=N`` which declares
how many data records (curves, vectors, scalars or operators) follow.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .linalg import GridCurve, check_symmetric, empirical_covariance, matrix_sqrt

__all__ = [
    "LabeledSample",
    "load_curves",
    "load_operators",
    "load_sample",
    "write_curves",
    "write_operators",
    "curves_to_operators",
    "simulate_gaussian_curves",
]

_DESIGN_COLS = ("row", "col", "block")
_ROWS_RE = re.compile(r"^#\s*rows\s*=\s*(\d+)\s*$")
_OP_RE = re.compile(r"^operator\s*,\s*([^,]*?)\s*,\s*dim\s*=\s*(\d+)\s*$")


@dataclass(eq=False)
class LabeledSample:
    """Homogeneous items with a group label each and optional design indices.

    ``kind`` is one of "scalar", "vector", "curve", "operator".
    ``design`` maps a column name (row, col, block) to per-item values.
    """

    items: list
    labels: list
    design: dict = field(default_factory=dict)
    kind: str = ""

    def __post_init__(self):
        if len(self.items) != len(self.labels):
            raise DomainError(f"{len(self.items)} items but {len(self.labels)} labels")
        for name, vals in self.design.items():
            if len(vals) != len(self.items):
                raise DomainError(f"design column {name!r} has {len(vals)} entries for {len(self.items)} items")
        if not self.kind and self.items:
            first = self.items[0]
            if isinstance(first, GridCurve):
                self.kind = "curve"
            else:
                self.kind = {0: "scalar", 1: "vector", 2: "operator"}[np.ndim(first)]

    def __len__(self):
        return len(self.items)

    def label_order(self):
        """Distinct labels in first-appearance order."""
        return list(dict.fromkeys(self.labels))

    def groups(self):
        """Items split by label, in first-appearance order, as arrays where possible."""
        out = []
        for lab in self.label_order():
            sel = [it for it, l in zip(self.items, self.labels) if l == lab]
            out.append(sel if self.kind == "curve" else np.asarray(sel, dtype=float))
        return out

    def subset(self, mask):
        idx = [i for i, keep in enumerate(mask) if keep]
        return LabeledSample(
            [self.items[i] for i in idx],
            [self.labels[i] for i in idx],
            {k: [v[i] for i in idx] for k, v in self.design.items()},
            self.kind,
        )


def _read_lines(path):
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except FileNotFoundError as exc:
        raise ParseError("file not found", path=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", path=str(path)) from exc
    if text.startswith("﻿"):
        text = text[1:]
    return text.splitlines()


def _meta_and_body(lines, path):
    """Split off comments; return (declared_rows, [(lineno, text), ...])."""
    declared = None
    body = []
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _ROWS_RE.match(line)
            if m:
                declared = int(m.group(1))
            continue
        body.append((no, line))
    if not body:
        raise ParseError("no data", path=path)
    return declared, body


def _floats(cells, no, path):
    try:
        vals = [float(c) for c in cells]
    except ValueError as exc:
        raise ParseError(f"non-numeric cell ({exc})", line=no, path=path) from None
    arr = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite value", line=no, path=path)
    return arr


def _split(line):
    return [c.strip() for c in next(csv.reader(io.StringIO(line)))]


def _check_count(declared, got, path):
    if declared is not None and declared != got:
        raise ParseError(f"header declares {declared} records but {got} were read (truncated file?)", path=path)


def load_curves(path, schema=None) -> LabeledSample:
    """Load curves, vectors or scalars from the CSV format in the module docstring.

    ``schema`` may force the expected kind ("curve", "vector", "scalar");
    by default the first header cell decides.
    """
    path = str(path)
    declared, body = _meta_and_body(_read_lines(path), path)
    no, header = body[0]
    head = _split(header)
    kind_word = head[0].lower()
    kinds = {"grid": "curve", "vector": "vector", "scalar": "scalar"}
    if kind_word not in kinds:
        raise ParseError(f"header must start with grid, vector or scalar, got {head[0]!r}", line=no, path=path)
    kind = kinds[kind_word]
    if schema is not None and schema != kind:
        raise ParseError(f"expected {schema} data but header declares {kind}", line=no, path=path)
    rest = head[1:]
    design_cols = []
    while rest and rest[0].lower() in _DESIGN_COLS:
        design_cols.append(rest.pop(0).lower())
    if kind == "scalar":
        if len(rest) != 1:
            raise ParseError("scalar header must be 'scalar,value'", line=no, path=path)
        grid = None
    elif kind == "curve":
        grid = _floats(rest, no, path)
        if grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise ParseError("grid must be strictly increasing", line=no, path=path)
    else:
        grid = None
    width = 1 + len(design_cols) + len(rest)
    items, labels = [], []
    design = {c: [] for c in design_cols}
    for no, line in body[1:]:
        cells = _split(line)
        if len(cells) != width:
            raise ParseError(f"expected {width} cells, got {len(cells)}", line=no, path=path)
        labels.append(cells[0])
        for j, c in enumerate(design_cols):
            design[c].append(cells[1 + j])
        vals = _floats(cells[1 + len(design_cols):], no, path)
        if kind == "scalar":
            items.append(float(vals[0]))
        elif kind == "curve":
            items.append(GridCurve(grid, vals))
        else:
            items.append(vals)
    if not items:
        raise ParseError("no data rows", path=path)
    _check_count(declared, len(items), path)
    return LabeledSample(items, labels, design, kind)


def load_operators(path) -> LabeledSample:
    """Load stacked symmetric d x d blocks, each introduced by ``operator,<label>,dim=<d>``."""
    path = str(path)
    declared, body = _meta_and_body(_read_lines(path), path)
    items, labels = [], []
    i = 0
    while i < len(body):
        no, line = body[i]
        m = _OP_RE.match(line)
        if not m:
            raise ParseError("expected 'operator,<label>,dim=<d>'", line=no, path=path)
        label, d = m.group(1), int(m.group(2))
        if d < 1:
            raise ParseError("dim must be positive", line=no, path=path)
        rows = []
        for r in range(d):
            if i + 1 + r >= len(body):
                raise ParseError(f"operator {label!r} ends after {r} of {d} rows", line=no, path=path)
            rno, rline = body[i + 1 + r]
            cells = _split(rline)
            if len(cells) != d:
                raise ParseError(f"expected {d} cells, got {len(cells)}", line=rno, path=path)
            rows.append(_floats(cells, rno, path))
        a = np.stack(rows)
        try:
            check_symmetric(a, f"operator {label!r}")
        except DomainError as exc:
            raise ParseError(str(exc), line=no, path=path) from None
        items.append(a)
        labels.append(label)
        i += 1 + d
    if items and any(a.shape != items[0].shape for a in items):
        raise ParseError("operators have different dimensions", path=path)
    _check_count(declared, len(items), path)
    return LabeledSample(items, labels, {}, "operator")


def load_sample(path) -> LabeledSample:
    """Dispatch on the first non-comment line."""
    lines = _read_lines(path)
    _, body = _meta_and_body(lines, str(path))
    if body[0][1].lower().startswith("operator"):
        return load_operators(path)
    return load_curves(path)


def _fmt(v):
    return repr(float(v))


def write_curves(path, sample: LabeledSample, with_count=True):
    """Write curves, vectors or scalars so that :func:`load_curves` reads them back exactly."""
    cols = [c for c in _DESIGN_COLS if c in sample.design]
    out = []
    if with_count:
        out.append(f"# rows={len(sample)}")
    if sample.kind == "curve":
        grid = sample.items[0].grid
        out.append(",".join(["grid"] + cols + [_fmt(g) for g in grid]))
    elif sample.kind == "vector":
        d = len(sample.items[0])
        out.append(",".join(["vector"] + cols + [f"x{j}" for j in range(d)]))
    elif sample.kind == "scalar":
        out.append(",".join(["scalar"] + cols + ["value"]))
    else:
        raise DomainError("write_curves handles curves, vectors and scalars")
    for i, (it, lab) in enumerate(zip(sample.items, sample.labels)):
        vals = it.values if isinstance(it, GridCurve) else np.atleast_1d(it)
        out.append(",".join([str(lab)] + [str(sample.design[c][i]) for c in cols] + [_fmt(v) for v in vals]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def write_operators(path, sample: LabeledSample, with_count=True):
    out = [f"# rows={len(sample)}"] if with_count else []
    for a, lab in zip(sample.items, sample.labels):
        a = np.asarray(a, dtype=float)
        out.append(f"operator,{lab},dim={a.shape[0]}")
        out.extend(",".join(_fmt(v) for v in row) for row in a)
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def curves_to_operators(sample: LabeledSample, group_size, seed) -> LabeledSample:
    """Covariance operators from random groups of curves within each label.

    Curves of each label are shuffled (seeded) and cut into consecutive groups
    of ``group_size``; each group gives its centred empirical covariance.
    """
    group_size = int(group_size)
    if group_size < 2:
        raise DomainError("group_size must be at least 2")
    rng = np.random.default_rng(seed)
    items, labels = [], []
    for lab in sample.label_order():
        curves = [c for c, l in zip(sample.items, sample.labels) if l == lab]
        if len(curves) % group_size:
            raise DomainError(f"label {lab!r} has {len(curves)} curves, not divisible by {group_size}")
        order = rng.permutation(len(curves))
        for start in range(0, len(curves), group_size):
            grp = [curves[j] for j in order[start:start + group_size]]
            if isinstance(grp[0], GridCurve):
                items.append(empirical_covariance(grp, center=True))
            else:
                items.append(empirical_covariance(np.asarray(grp, dtype=float), center=True))
            labels.append(lab)
    return LabeledSample(items, labels, {}, "operator")


def simulate_gaussian_curves(mean: GridCurve, covariance, n, seed):
    """n Gaussian curves ``mean + Sigma^{1/2} z`` on the mean's grid."""
    cov = check_symmetric(covariance, "covariance")
    if cov.shape != (mean.grid.size, mean.grid.size):
        raise DomainError(f"covariance is {cov.shape} but the grid has {mean.grid.size} points")
    root = matrix_sqrt(cov)
    z = np.random.default_rng(seed).standard_normal((int(n), mean.grid.size))
    vals = mean.values + z @ root
    return [GridCurve(mean.grid, v) for v in vals]
