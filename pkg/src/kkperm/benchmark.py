"""Analytic CRBD pipeline versus Monte-Carlo permutation cost.

The analytic pipeline is timed end to end (bounds plus calibration). Its
decompositions are counted in two stages: the bound stage (per-block scales
and the observed pairwise statistics) and the calibration stage (the r
null relabelings). One Monte-Carlo permutation needs every pairwise
statistic in every block, so its cost is measured on a few permutations and
extrapolated.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .betacal import DEFAULT_R
from .bounds import BoundConfig
from .designs import _BlockedEngine, _banach_cells, crbd_test
from .linalg import DECOMPOSITIONS, NormSpec
from .mc_oracle import STREAM_MC

__all__ = ["BenchmarkResult", "synthetic_crbd_cells", "run_benchmark"]


@dataclass
class BenchmarkResult:
    d: int
    k: int
    blocks: int
    per_cell: int
    n_perms: int
    r: int
    norm: str
    pairings: int
    analytic_seconds: float
    analytic_bound_decompositions: int
    analytic_calibration_decompositions: int
    analytic_total_decompositions: int
    mc_seconds_per_permutation: float
    mc_decompositions_per_permutation: int
    mc_measured_permutations: int
    mc_extrapolated_seconds: float
    speedup: float
    global_statistic: float
    pairwise_statistics: list

    def to_dict(self):
        return asdict(self)


def synthetic_crbd_cells(d, k, blocks, per_cell, seed=0, rank=5):
    """Random PSD operators ``G G^T / rank`` with G of shape (d, rank)."""
    rng = np.random.default_rng(seed)
    cells = []
    for _ in range(blocks):
        row = []
        for _ in range(k):
            g = rng.standard_normal((per_cell, d, rank))
            row.append(np.einsum("nij,nkj->nik", g, g) / rank)
        cells.append(row)
    return cells


def run_benchmark(d=100, k=12, blocks=4, per_cell=5, n_perms=132_000, r=DEFAULT_R, seed=0, measure_perms=3, q=1.0):
    """Time the analytic CRBD pipeline and extrapolate the Monte-Carlo cost.

    Returns
    -------
    BenchmarkResult
        Decomposition counts come from the instrumented counter, not from
        formulas.
    """
    spec = NormSpec("schatten", q)
    cfg = BoundConfig()
    cells = synthetic_crbd_cells(d, k, blocks, per_cell, seed)

    with DECOMPOSITIONS.measure() as bound_count:
        engine = _BlockedEngine(_banach_cells(cells, spec), cfg)
        engine.observed()

    t0 = time.perf_counter()
    with DECOMPOSITIONS.measure() as total_count:
        pairwise, glob = crbd_test(cells, spec, cfg, r=r, seed=seed)
    analytic_seconds = time.perf_counter() - t0

    measure_perms = max(1, int(measure_perms))
    with DECOMPOSITIONS.measure() as mc_count:
        t0 = time.perf_counter()
        for j in range(measure_perms):
            engine.pair_values(engine.draws(1, seed, STREAM_MC, start=j))
        mc_seconds = (time.perf_counter() - t0) / measure_perms
    per_perm = mc_count[0] // measure_perms
    extrapolated = mc_seconds * n_perms
    return BenchmarkResult(
        d=d,
        k=k,
        blocks=blocks,
        per_cell=per_cell,
        n_perms=n_perms,
        r=r,
        norm=spec.label(),
        pairings=engine.P,
        analytic_seconds=analytic_seconds,
        analytic_bound_decompositions=bound_count[0],
        analytic_calibration_decompositions=total_count[0] - bound_count[0],
        analytic_total_decompositions=total_count[0],
        mc_seconds_per_permutation=mc_seconds,
        mc_decompositions_per_permutation=per_perm,
        mc_measured_permutations=measure_perms,
        mc_extrapolated_seconds=extrapolated,
        speedup=extrapolated / analytic_seconds if analytic_seconds > 0 else float("inf"),
        global_statistic=glob.statistic,
        pairwise_statistics=[rep.statistic for rep in pairwise],
    )
