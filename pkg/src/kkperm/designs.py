"""Test drivers for experimental designs.

* one-way k-sample analyses: pairwise two-sample tests with Bonferroni or
  Holm correction plus a synchronized global test;
* the complete randomized block design (CRBD), where pairwise statistics are
  computed within each block and summed over blocks;
* design centering and the stepdown procedure for an unreplicated Latin
  square.

Scalar one-way data use the univariate bound with its closed-form beta
adjustment for each pair and the synchronized matrix for the global test.
Vectors, curves and operators go through a blocked engine: a one-way layout
is a CRBD with a single block, so the two code paths coincide exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .betacal import (
    DEFAULT_R,
    CalibrationRecord,
    adjust_with_fallback,
    analytic_beta_adjust,
    record_from_pvalues,
)
from .bounds import (
    BanachData,
    BoundConfig,
    SampleSplit,
    build_sync_matrix,
    canonical_signs,
    center_columns,
    pair_index,
    subgaussian_bound_values,
    sync_bound_values,
    sync_statistic,
    sync_tail_bound,
    univariate_bound_values,
    univariate_null_statistics,
    univariate_statistic,
    univariate_tail_bound,
)
from .errors import CalibrationError, DegenerateDataError, DomainError, UnsupportedDesignError
from .linalg import GridCurve, NormSpec
from .mc_oracle import (
    BLOCK,
    STREAM_CALIBRATION,
    STREAM_MC,
    McEstimate,
    count_exceedances,
    draw_signs,
    mc_pvalue,
    mc_sync_pvalue,
    stratified_permutations,
)

__all__ = [
    "DesignLayout",
    "PValueReport",
    "FactorDecision",
    "apply_correction",
    "pairwise_tests",
    "global_test",
    "oneway_analysis",
    "crbd_test",
    "blocking_factor_test",
    "center_by_design",
    "latin_square_stepdown",
    "CORRECTIONS",
]

CORRECTIONS = ("none", "bonferroni", "holm")
FACTORS = ("row", "column", "treatment")
_STREAM_LATIN = (2,)
_ASSUMPTIONS = ("block-by-treatment interactions assumed negligible",)


@dataclass(frozen=True, eq=False)
class DesignLayout:
    """Label structure of a design.

    Parameters
    ----------
    kind : {"one-way", "latin-square", "crbd"}
    treatments : sequence of treatment labels
    square : k x k integer array (Latin square) of treatment indices
    blocks : sequence of block labels (CRBD)
    """

    kind: str
    treatments: tuple
    square: np.ndarray | None = None
    blocks: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("one-way", "latin-square", "crbd"):
            raise DomainError(f"unknown design kind {self.kind!r}")
        object.__setattr__(self, "treatments", tuple(self.treatments))
        k = len(self.treatments)
        if k < 2:
            raise DomainError("a design needs at least two treatments")
        if self.kind == "latin-square":
            sq = np.asarray(self.square)
            if sq.shape != (k, k):
                raise DomainError(f"Latin square must be {k}x{k}, got shape {sq.shape}")
            full = set(range(k))
            for i in range(k):
                if set(sq[i].tolist()) != full or set(sq[:, i].tolist()) != full:
                    raise DomainError("not a Latin square: each treatment must appear once per row and column")
            object.__setattr__(self, "square", sq.astype(int))
        if self.kind == "crbd":
            if not self.blocks:
                raise DomainError("a CRBD layout needs block labels")
            object.__setattr__(self, "blocks", tuple(self.blocks))

    @classmethod
    def cyclic_latin(cls, k, treatments=None):
        """The cyclic square ``(i + j) mod k``."""
        sq = (np.arange(k)[:, None] + np.arange(k)[None, :]) % k
        return cls("latin-square", treatments or tuple(range(k)), sq)

    def to_dict(self):
        out = {"kind": self.kind, "treatments": [str(t) for t in self.treatments]}
        if self.square is not None:
            out["square"] = self.square.tolist()
        if self.blocks is not None:
            out["blocks"] = [str(b) for b in self.blocks]
        return out


def _log(p, base):
    return math.log(p, base) if p > 0 else float("-inf")


@dataclass
class PValueReport:
    """Outcome of one test."""

    statistic: float
    p_raw: float
    p_adjusted: float
    method: str
    norm: NormSpec | None = None
    p_mc: McEstimate | None = None
    correction: str = "none"
    p_corrected: float | None = None
    calibration: CalibrationRecord | None = None
    flags: list = field(default_factory=list)
    label: str = ""
    pair: tuple | None = None

    @property
    def p_final(self) -> float:
        return self.p_adjusted if self.p_corrected is None else self.p_corrected

    def to_dict(self):
        return {
            "label": self.label,
            "pair": None if self.pair is None else list(self.pair),
            "method": self.method,
            "norm": None if self.norm is None else self.norm.to_dict(),
            "statistic": self.statistic,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
            "correction": self.correction,
            "p_corrected": self.p_corrected,
            "log2_p": _log(self.p_final, 2),
            "log10_p": _log(self.p_final, 10),
            "p_mc": None if self.p_mc is None else self.p_mc.to_dict(),
            "calibration": None if self.calibration is None else self.calibration.to_dict(),
            "flags": list(self.flags),
        }


def apply_correction(pvalues, method):
    """Bonferroni or Holm adjustment of a family of p-values.

    Bonferroni: ``min(1, K p)``. Holm: sort ascending, multiply the j-th
    smallest (0-based) by ``K - j``, enforce monotonicity, cap at 1.
    """
    p = np.asarray(pvalues, dtype=float)
    k = p.size
    if method == "none":
        return p.copy()
    if method == "bonferroni":
        return np.minimum(1.0, k * p)
    if method == "holm":
        order = np.argsort(p, kind="stable")
        stepped = np.maximum.accumulate((k - np.arange(k)) * p[order])
        out = np.empty(k)
        out[order] = np.minimum(1.0, stepped)
        return out
    raise DomainError(f"unknown correction {method!r}; expected one of {CORRECTIONS}")


def _finish_family(reports, correction):
    if correction not in CORRECTIONS:
        raise DomainError(f"unknown correction {correction!r}")
    corrected = apply_correction([rep.p_adjusted for rep in reports], correction)
    for rep, pc in zip(reports, corrected):
        rep.correction = correction
        rep.p_corrected = float(pc) if correction != "none" else None
    return reports


# -- item handling ----------------------------------------------------------


def _is_scalar_group(g):
    if isinstance(g, np.ndarray):
        return g.ndim == 1
    return len(g) > 0 and not isinstance(g[0], GridCurve) and np.ndim(g[0]) == 0


def _group_array(g, spec):
    """Items of one group as an array plus weights/grid info (via BanachData)."""
    return BanachData.from_items(g if isinstance(g, np.ndarray) else list(g), spec)


def _default_spec(g):
    if isinstance(g, np.ndarray):
        return NormSpec("schatten", 1) if g.ndim == 3 else NormSpec("sequence", 2)
    if isinstance(g[0], GridCurve):
        return NormSpec("function", 2)
    return NormSpec("schatten", 1) if np.ndim(g[0]) == 2 else NormSpec("sequence", 2)


def _method_for(data: BanachData):
    return "noncommutative-bound" if data.is_operator else "commutative-bound"


# -- blocked Banach engine ---------------------------------------------------


class _BlockedEngine:
    """Pairwise and global Banach statistics for k treatments in B blocks.

    ``cells[b][t]`` is a BanachData holding the items of treatment t in
    block b; within a block every treatment has the same count m_b.
    """

    def __init__(self, cells, cfg: BoundConfig):
        self.cfg = cfg
        self.B = len(cells)
        self.k = len(cells[0])
        first = cells[0][0]
        self.spec = first.spec
        self.weights = first.weights
        self.is_operator = first.is_operator
        self.template = first
        self.pairs = pair_index(self.k)
        self.P = len(self.pairs)
        self.c = cfg.c_noncommutative if self.is_operator else cfg.c_commutative
        self.blocks = []  # per block: (m, stacked array (k, m, ...))
        shape = first.x.shape[1:]
        for b, row in enumerate(cells):
            if len(row) != self.k:
                raise UnsupportedDesignError(f"block {b} does not contain all {self.k} treatments")
            m = row[0].n
            for t, cell in enumerate(row):
                if cell.x.shape[1:] != shape:
                    raise DomainError("items differ in shape across cells")
                if cell.n != m:
                    raise UnsupportedDesignError(
                        f"unbalanced cells in block {b}: treatment {t} has {cell.n} items, expected {m}"
                    )
            self.blocks.append((m, np.stack([cell.x for cell in row])))
        self._scales()

    # scales
    def _scales(self):
        """Per-block pair scale from the pooled block covariance.

        ``scale_b = sqrt((2m-1)/(km-1)) ||C_b^{1/2}||_{S^q}`` where C_b is the
        centred second-moment sum of all items in block b: one
        decomposition per block, and for k = 2 exactly the two-sample scale.
        """
        scales = []
        for m, xs in self.blocks:
            pooled = xs.reshape((-1,) + xs.shape[2:])
            tmp = BanachData(pooled, self.spec, self.weights)
            full = tmp.scale()
            nb = pooled.shape[0]
            scales.append(math.sqrt((2 * m - 1) / (nb - 1)) * full if nb > 1 else 0.0)
        self.block_scale = np.asarray(scales)
        self.pair_scale = float(self.block_scale.sum())
        if not self.pair_scale > 0:
            raise DegenerateDataError("all items are identical; the statistic scale is zero")

    def global_scale(self):
        """``S = ||C||_F`` with ``C_pq = sum_b s_b^2 cos(Z_p^b, Z_q^b)``.

        ``Z_p^b`` stacks the pair-centred items of pair p in block b; the
        cosine uses the Hilbert inner product of the underlying space.
        """
        cmat = np.zeros((self.P, self.P))
        ii = [p[0] for p in self.pairs]
        jj = [p[1] for p in self.pairs]
        for (m, xs), s in zip(self.blocks, self.block_scale):
            flat = self.template.flat(xs.reshape((-1,) + xs.shape[2:]))
            flat = flat.reshape(self.k, m, -1)
            z = np.concatenate([flat[ii], flat[jj]], axis=1)  # (P, 2m, D)
            z = z - z.mean(axis=1, keepdims=True)
            gram = np.einsum("pad,qad->pq", z, z)
            nrm = np.sqrt(np.clip(np.diag(gram), 0, None))
            safe = np.where(nrm > 0, nrm, 1.0)
            cos = gram / np.outer(safe, safe)
            np.fill_diagonal(cos, 1.0)
            cmat += s * s * cos
        return float(np.linalg.norm(cmat))

    # statistics
    def pair_values(self, signs_per_block):
        """(R, P) summed pairwise statistics for R draws.

        ``signs_per_block[b]`` is an (R, 2 m_b) array; the first m_b signs
        weight treatment i and the last m_b weight treatment j of every pair.
        """
        ii = np.array([p[0] for p in self.pairs])
        jj = np.array([p[1] for p in self.pairs])
        total = None
        for (m, xs), e in zip(self.blocks, signs_per_block):
            e = np.asarray(e, dtype=float)
            flat = xs.reshape(self.k, m, -1)
            left = np.einsum("ra,tad->rtd", e[:, :m], flat)
            right = np.einsum("ra,tad->rtd", e[:, m:], flat)
            sums = left[:, ii] + right[:, jj]  # (R, P, D)
            r = sums.shape[0]
            sums = sums.reshape((r * self.P,) + xs.shape[2:])
            vals = self.template.norms(sums).reshape(r, self.P)
            total = vals if total is None else total + vals
        return total

    def observed(self):
        return self.pair_values([canonical_signs(2 * m)[None] for m, _ in self.blocks])[0]

    def draws(self, count, seed, stream, start=0):
        return [draw_signs(2 * m, count, seed, tuple(stream) + (b,), start=start) for b, (m, _) in enumerate(self.blocks)]

    def pair_bounds(self, values):
        return subgaussian_bound_values(values, self.pair_scale, self.c)


def _run_engine(engine: _BlockedEngine, spec, calibrate_on, r, seed, n_mc, labels, want_global=True):
    """Pairwise and global reports from one set of block-synchronized draws."""
    obs = engine.observed()
    p_raw = engine.pair_bounds(obs)
    method = "noncommutative-bound" if engine.is_operator else "commutative-bound"
    s_glob = engine.global_scale() if want_global else None
    t_glob = float(np.sqrt(np.sum(obs**2)))
    pg_raw = float(sync_bound_values(t_glob, s_glob, engine.cfg.c_sync)) if want_global else None

    null_vals = null_glob = None
    if calibrate_on:
        if int(r) < 2:
            raise DomainError(f"calibration needs r >= 2, got {r}")
        null_vals = engine.pair_values(engine.draws(int(r), seed, STREAM_CALIBRATION))
        null_glob = np.sqrt(np.sum(null_vals**2, axis=1))

    mc_counts = mc_glob = None
    if n_mc:
        mc_counts = np.zeros(engine.P, dtype=int)
        mc_glob = 0
        per_draw = engine.P * max(1, int(np.prod(engine.blocks[0][1].shape[2:])))
        chunk = int(max(1, min(256, 4_000_000 // per_draw)))
        j = 0
        while j < n_mc:
            take = min(chunk, n_mc - j)
            vals = engine.pair_values(engine.draws(take, seed, STREAM_MC, start=j))
            for p in range(engine.P):
                mc_counts[p] += count_exceedances(vals[:, p], obs[p])
            mc_glob += count_exceedances(np.sqrt(np.sum(vals**2, axis=1)), t_glob)
            j += take

    reports = []
    for p, (i, j) in enumerate(engine.pairs):
        rec, flags = None, []
        p_adj = float(p_raw[p])
        if calibrate_on:
            rec = record_from_pvalues(engine.pair_bounds(null_vals[:, p]), seed)
            p_adj, flags = adjust_with_fallback(p_raw[p], rec)
        reports.append(
            PValueReport(
                statistic=float(obs[p]),
                p_raw=float(p_raw[p]),
                p_adjusted=float(p_adj),
                method=method,
                norm=spec,
                p_mc=None if mc_counts is None else McEstimate.from_count(int(mc_counts[p]), n_mc),
                calibration=rec,
                flags=flags,
                label=f"{labels[i]} vs {labels[j]}",
                pair=(i, j),
            )
        )
    glob = None
    if want_global:
        rec, flags = None, []
        pg_adj = pg_raw
        if calibrate_on:
            rec = record_from_pvalues(sync_bound_values(null_glob, s_glob, engine.cfg.c_sync), seed)
            pg_adj, flags = adjust_with_fallback(pg_raw, rec)
        glob = PValueReport(
            statistic=t_glob,
            p_raw=pg_raw,
            p_adjusted=float(pg_adj),
            method="sync-bound",
            norm=spec,
            p_mc=None if mc_glob is None else McEstimate.from_count(int(mc_glob), n_mc),
            calibration=rec,
            flags=flags,
            label="global",
        )
    return reports, glob


def _banach_cells(groups_by_block, spec):
    return [[_group_array(g, spec) for g in row] for row in groups_by_block]


# -- scalar one-way paths ----------------------------------------------------


def _scalar_pairwise(samples, labels, n_mc, seed):
    reports = []
    for p, (i, j) in enumerate(pair_index(len(samples))):
        a = np.asarray(samples[i], dtype=float).ravel()
        b = np.asarray(samples[j], dtype=float).ravel()
        split = SampleSplit(a.size, b.size)
        x = np.concatenate([a, b])
        try:
            stat = univariate_statistic(x, split)
        except DegenerateDataError as exc:
            raise DegenerateDataError(f"pair {labels[i]} vs {labels[j]}: {exc}") from exc
        p_raw = univariate_tail_bound(stat, split)
        est = None
        if n_mc:
            est = mc_pvalue(univariate_null_statistics(x, split), stat.value, n_mc, seed, split.n, split.m1, STREAM_MC + (p,))
        reports.append(
            PValueReport(
                statistic=stat.value,
                p_raw=p_raw,
                p_adjusted=analytic_beta_adjust(p_raw, split),
                method="univariate-bound",
                p_mc=est,
                label=f"{labels[i]} vs {labels[j]}",
                pair=(i, j),
            )
        )
    return reports


def _scalar_global(samples, cfg, calibrate_on, r, seed, n_mc):
    x = center_columns(build_sync_matrix(samples))
    if not np.any(x):
        raise DegenerateDataError("all groups are identical constants; the global statistic is degenerate")
    n = x.shape[0]
    stat = sync_statistic(x, canonical_signs(n))
    p_raw = sync_tail_bound(stat, cfg)
    rec, flags, p_adj = None, [], p_raw
    if calibrate_on:
        if int(r) < 2:
            raise DomainError(f"calibration needs r >= 2, got {r}")
        null = np.linalg.norm(draw_signs(n, int(r), seed, STREAM_CALIBRATION) @ x, axis=1)
        rec = record_from_pvalues(sync_bound_values(null, stat.scale, cfg.c_sync), seed)
        p_adj, flags = adjust_with_fallback(p_raw, rec)
    est = mc_sync_pvalue(x, n_mc, seed, STREAM_MC) if n_mc else None
    return PValueReport(
        statistic=stat.value,
        p_raw=p_raw,
        p_adjusted=float(p_adj),
        method="sync-bound",
        p_mc=est,
        calibration=rec,
        flags=flags,
        label="global",
    )


# -- public drivers ------------------------------------------------------------


def _labels(samples, labels):
    return list(labels) if labels is not None else [str(i) for i in range(len(samples))]


def _check_k(samples):
    if len(samples) < 2:
        raise DomainError("need at least two groups")


def oneway_analysis(
    samples,
    spec: NormSpec | None = None,
    cfg: BoundConfig | None = None,
    correction="none",
    r=DEFAULT_R,
    seed=0,
    n_mc=0,
    labels=None,
    with_global=True,
):
    """Pairwise reports and (optionally) the global report of a one-way layout.

    Parameters
    ----------
    samples : list of groups
        Each group is a 1-d array of scalars, an (m, d) array of vectors, a
        list of GridCurve, or an (m, d, d) array of symmetric operators.
    spec : NormSpec, optional
        Norm for Banach data; defaults to l2 / L2 / trace norm.
    cfg : BoundConfig
    correction : {"none", "bonferroni", "holm"}
    r : int
        Calibration draws for Banach and global tests.
    seed : int
    n_mc : int
        Monte-Carlo cross-check budget (0 disables it).
    """
    _check_k(samples)
    cfg = cfg or BoundConfig()
    labels = _labels(samples, labels)
    if all(_is_scalar_group(g) for g in samples):
        pairwise = _scalar_pairwise(samples, labels, n_mc, seed)
        glob = _scalar_global(samples, cfg, cfg.calibrate, r, seed, n_mc) if with_global else None
        return _finish_family(pairwise, correction), glob
    spec = spec or _default_spec(samples[0])
    engine = _BlockedEngine(_banach_cells([samples], spec), cfg)
    pairwise, glob = _run_engine(engine, spec, cfg.calibrate, r, seed, n_mc, labels, with_global)
    return _finish_family(pairwise, correction), glob


def pairwise_tests(samples, spec=None, cfg=None, correction="none", r=DEFAULT_R, seed=0, n_mc=0, labels=None):
    """All C(k,2) two-sample tests with the requested multiple-testing correction."""
    return oneway_analysis(samples, spec, cfg, correction, r, seed, n_mc, labels, with_global=False)[0]


def global_test(samples, cfg=None, calibrate=None, r=DEFAULT_R, seed=0, n_mc=0, spec=None):
    """Synchronized k-sample test of equality across all groups.

    Balanced groups are required. ``calibrate`` overrides ``cfg.calibrate``.
    """
    _check_k(samples)
    cfg = cfg or BoundConfig()
    calibrate_on = cfg.calibrate if calibrate is None else bool(calibrate)
    sizes = {len(g) for g in samples}
    if len(sizes) != 1:
        raise UnsupportedDesignError(f"the global test needs balanced groups, got sizes {sorted(sizes)}")
    if all(_is_scalar_group(g) for g in samples):
        return _scalar_global(samples, cfg, calibrate_on, r, seed, n_mc)
    spec = spec or _default_spec(samples[0])
    engine = _BlockedEngine(_banach_cells([samples], spec), cfg)
    return _run_engine(engine, spec, calibrate_on, r, seed, n_mc, _labels(samples, None))[1]


def _promote_scalars(g):
    if _is_scalar_group(g):
        return np.asarray(g, dtype=float).reshape(-1, 1)
    return g


def crbd_test(
    cells,
    spec: NormSpec | None = None,
    cfg: BoundConfig | None = None,
    mode="means",
    correction="none",
    r=DEFAULT_R,
    seed=0,
    n_mc=0,
    treatments=None,
    group_size=None,
):
    """Complete randomized block design.

    Parameters
    ----------
    cells : list over blocks of list over treatments of groups
        ``cells[b][t]`` holds the responses of treatment t in block b.
    mode : {"means", "covariances"}
        "covariances" turns each cell of curves (or vectors) into covariance
        operators by grouping ``group_size`` responses at a time; operator
        cells are used as given.

    Returns
    -------
    (list of PValueReport, PValueReport)
        Pairwise reports, then the global report. Statistics and scales are
        summed over blocks; calibration draws one sign vector per block and
        applies it to every pairing.
    """
    if mode not in ("means", "covariances"):
        raise DomainError(f"unknown mode {mode!r}")
    if not cells:
        raise DomainError("no blocks")
    k = len(cells[0])
    if k < 2:
        raise DomainError("need at least two treatments")
    cfg = cfg or BoundConfig()
    labels = list(treatments) if treatments is not None else [str(i) for i in range(k)]
    if mode == "covariances":
        cells = [[_to_operators(g, group_size, seed + 7919 * b + t) for t, g in enumerate(row)] for b, row in enumerate(cells)]
    if len(cells) == 1 and mode == "means":
        pw, glob = oneway_analysis(cells[0], spec, cfg, correction, r, seed, n_mc, labels)
        return pw, glob
    cells = [[_promote_scalars(g) for g in row] for row in cells]
    spec = spec or _default_spec(cells[0][0])
    engine = _BlockedEngine(_banach_cells(cells, spec), cfg)
    pw, glob = _run_engine(engine, spec, cfg.calibrate, r, seed, n_mc, labels)
    glob.flags.extend(_ASSUMPTIONS)
    return _finish_family(pw, correction), glob


def _to_operators(g, group_size, seed):
    arr = g if isinstance(g, np.ndarray) else None
    if arr is not None and arr.ndim == 3:
        return arr
    from .ingest import LabeledSample, curves_to_operators

    items = list(g)
    if not items:
        raise DomainError("empty cell")
    if not isinstance(items[0], GridCurve):
        vals = np.asarray(items, dtype=float)
        grid = np.arange(vals.shape[1], dtype=float)
        items = [GridCurve(grid, v) for v in vals]
    size = group_size or len(items)
    sample = LabeledSample(items, ["cell"] * len(items))
    return np.stack(curves_to_operators(sample, size, seed).items)


def blocking_factor_test(cells, spec=None, cfg=None, r=DEFAULT_R, seed=0, n_mc=0, blocks=None):
    """Test the blocking factor itself: pool each block's responses across treatments.

    Returns pairwise reports between block levels (one report for a
    two-level factor).
    """
    groups = []
    for row in cells:
        pooled = []
        for g in row:
            pooled.extend(list(g))
        if isinstance(row[0], np.ndarray):
            pooled = np.concatenate([np.asarray(g) for g in row])
        groups.append(pooled)
    return pairwise_tests(groups, spec, cfg, "none", r, seed, n_mc, blocks)


# -- Latin square ------------------------------------------------------------


def center_by_design(responses, layout: DesignLayout):
    """Remove grand mean, row effects and column effects.

    ``responses`` has shape (k, k, ...) indexed by (row, column); the
    residual is ``y - rowmean - colmean + grandmean``.
    """
    y = np.asarray(responses, dtype=float)
    k = len(layout.treatments)
    if y.ndim < 2 or y.shape[:2] != (k, k):
        raise DomainError(f"responses must form a complete {k}x{k} grid, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DomainError("responses contain non-finite entries")
    row = y.mean(axis=1, keepdims=True)
    col = y.mean(axis=0, keepdims=True)
    grand = y.mean(axis=(0, 1), keepdims=True)
    return y - row - col + grand


@dataclass
class FactorDecision:
    """Stepdown outcome for one factor."""

    factor: str
    statistic: float
    decision: str  # rejected | not-rejected | not-tested | untestable
    stage: int | None = None
    p_value: float | None = None
    p_raw: float | None = None
    calibration: CalibrationRecord | None = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "factor": self.factor,
            "statistic": self.statistic,
            "decision": self.decision,
            "stage": self.stage,
            "p_value": self.p_value,
            "p_raw": self.p_raw,
            "calibration": None if self.calibration is None else self.calibration.to_dict(),
            "flags": list(self.flags),
        }


class _LatinFactors:
    """Factor statistics of a Latin square under item permutations."""

    def __init__(self, data: BanachData, layout: DesignLayout, cfg: BoundConfig):
        k = len(layout.treatments)
        self.k = k
        self.data = data
        cells = np.arange(k * k)
        rows, cols = np.divmod(cells, k)
        self.levels = {
            "row": rows,
            "column": cols,
            "treatment": layout.square[rows, cols],
        }
        self.pairs = pair_index(k)
        # Indicator of level-i minus level-j membership for every pair.
        self.contrast = {}
        for f, lev in self.levels.items():
            onehot = (lev[None, :] == np.arange(k)[:, None]).astype(float)
            self.contrast[f] = np.stack([onehot[i] - onehot[j] for i, j in self.pairs])
        xc = data.centered()
        full = data.scale(xc)
        if not full > 0:
            raise DegenerateDataError("all responses are identical")
        s = math.sqrt((2 * k - 1) / (k * k - 1)) * full
        flat = data.flat(xc)
        self.S = {}
        for f, lev in self.levels.items():
            members = [np.flatnonzero(lev == i) for i in range(k)]
            z = np.stack([np.concatenate([flat[members[i]], flat[members[j]]]) for i, j in self.pairs])
            z = z - z.mean(axis=1, keepdims=True)
            gram = np.einsum("pad,qad->pq", z, z)
            nrm = np.sqrt(np.clip(np.diag(gram), 0, None))
            safe = np.where(nrm > 0, nrm, 1.0)
            cos = gram / np.outer(safe, safe)
            np.fill_diagonal(cos, 1.0)
            self.S[f] = float(s * s * np.linalg.norm(cos))
        self.c = cfg.c_sync

    def values(self, perms, factors):
        """(R, len(factors)) statistics ``sqrt(sum_p ||T_p||^2)`` for permuted data."""
        x = self.data.x
        out = np.empty((perms.shape[0], len(factors)))
        for lo in range(0, perms.shape[0], 128):
            px = x[perms[lo:lo + 128]]  # (R, k^2, ...)
            r = px.shape[0]
            flat = px.reshape(r, self.k * self.k, -1)
            for a, f in enumerate(factors):
                sums = np.einsum("pc,rcd->rpd", self.contrast[f], flat)
                sums = sums.reshape((r * len(self.pairs),) + x.shape[1:])
                tp = self.data.norms(sums).reshape(r, len(self.pairs))
                out[lo:lo + r, a] = np.sqrt(np.sum(tp * tp, axis=1))
        return out

    def bound(self, t, factor):
        return sync_bound_values(t, self.S[factor], self.c)


def latin_square_stepdown(
    responses,
    layout: DesignLayout,
    spec: NormSpec | None = None,
    level=0.05,
    n_perms=None,
    r=20,
    cfg: BoundConfig | None = None,
    seed=0,
):
    """Stepdown factor testing for an unreplicated Latin square.

    Parameters
    ----------
    responses : k*k items in row-major cell order, or a (k, k, ...) array
        Scalars, vectors, curves (list of GridCurve) or operators.
    layout : DesignLayout of kind "latin-square"
    level : float in (0, 1)
    n_perms : int or None
        Monte-Carlo permutations per stage; ``None`` uses the calibrated
        analytic bound with ``r`` draws per stage.

    Returns
    -------
    list of FactorDecision
        In testing order (largest statistic first).

    Notes
    -----
    Each factor's statistic is ``sqrt(sum_{i<j} ||S_i - S_j||^2)`` over its
    level sums. Stage 1 permutes all items and uses the maximum over the
    three factors, which accounts for having picked the largest. Later
    stages permute only within the levels of the factors already rejected
    and use the maximum over the factors still in play. The last remaining
    factor cannot be tested.
    """
    if layout.kind != "latin-square":
        raise DomainError("latin_square_stepdown needs a latin-square layout")
    if not (0.0 < float(level) < 1.0):
        raise DomainError(f"level must lie in (0, 1), got {level!r}")
    k = len(layout.treatments)
    cfg = cfg or BoundConfig()
    items = responses
    if isinstance(responses, np.ndarray) and responses.ndim >= 2 and responses.shape[:2] == (k, k):
        items = responses.reshape((k * k,) + responses.shape[2:])
    if len(items) != k * k:
        raise DomainError(f"expected {k * k} responses, got {len(items)}")
    if _is_scalar_group(items):
        items = np.asarray(items, dtype=float).reshape(-1, 1)
    spec = spec or _default_spec(items)
    data = BanachData.from_items(items if isinstance(items, np.ndarray) else list(items), spec)
    fac = _LatinFactors(data, layout, cfg)

    ident = np.arange(k * k)[None]
    obs = dict(zip(FACTORS, fac.values(ident, FACTORS)[0]))
    order = sorted(FACTORS, key=lambda f: -obs[f])
    testable = 1 if k == 2 else 2
    decisions = []
    remaining = list(order)
    rejected = []
    stopped = False
    for stage, f in enumerate(order):
        if stage >= testable:
            decisions.append(FactorDecision(f, float(obs[f]), "untestable"))
            continue
        if stopped:
            decisions.append(FactorDecision(f, float(obs[f]), "not-tested"))
            continue
        strata = np.zeros(k * k, dtype=int)
        for g in rejected:
            strata = strata * k + fac.levels[g]
        stream = _STREAM_LATIN + (stage,)
        p_raw = float(fac.bound(obs[f], f))
        rec, flags = None, []
        if n_perms:
            perms = stratified_permutations(strata, int(n_perms), seed, stream)
            null = fac.values(perms, remaining).max(axis=1)
            p = McEstimate.from_count(count_exceedances(null, obs[f]), int(n_perms)).p_hat
        else:
            perms = stratified_permutations(strata, int(r), seed, stream)
            null = fac.values(perms, remaining).max(axis=1)
            rec = record_from_pvalues(fac.bound(null, f), seed)
            p, flags = adjust_with_fallback(p_raw, rec)
        decision = "rejected" if p <= level else "not-rejected"
        decisions.append(FactorDecision(f, float(obs[f]), decision, stage + 1, float(p), p_raw, rec, flags))
        remaining.remove(f)
        if decision == "rejected":
            rejected.append(f)
        else:
            stopped = True
    return decisions
