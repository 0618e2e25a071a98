"""Replication studies comparing analytic p-values with permutation p-values.

Each study returns a :class:`StudyResult`: per grid point summaries
(mean log2 p-value per method) plus study-specific diagnostics. The same
functions back ``kkperm simulate`` and the acceptance tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .betacal import analytic_beta_params
from .bounds import BoundConfig, SampleSplit, univariate_bound_values
from .designs import global_test, oneway_analysis
from .ingest import LabeledSample, curves_to_operators
from .linalg import GridCurve, NormSpec, covariance_path, matrix_sqrt
from .mc_oracle import BLOCK, STREAM_MC, iter_sign_blocks
from .specfun import reg_inc_beta

__all__ = [
    "StudyResult",
    "uni_two_sample_study",
    "uni_ksample_study",
    "curves_mean_study",
    "null_calibration_study",
    "procrustes_study",
    "default_procrustes_pair",
    "SCENARIOS",
]

PLOT_COLUMNS = ("grid", "method", "mean_log2_p", "mean_log10_p", "replicates")


@dataclass
class StudyResult:
    """Per grid point mean log2 p-values by method, plus extra diagnostics."""

    name: str
    grid: list
    methods: dict  # method -> list of mean log2 p, aligned with grid
    replicates: int
    extra: dict = field(default_factory=dict)

    def plot_rows(self):
        rows = []
        for method, vals in self.methods.items():
            for g, v in zip(self.grid, vals):
                rows.append(
                    {
                        "grid": g,
                        "method": method,
                        "mean_log2_p": v,
                        "mean_log10_p": v * math.log10(2),
                        "replicates": self.replicates,
                    }
                )
        return rows

    def to_dict(self):
        return {
            "name": self.name,
            "grid": list(self.grid),
            "methods": {k: list(v) for k, v in self.methods.items()},
            "replicates": self.replicates,
            "extra": self.extra,
        }


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


# -- univariate two-sample -----------------------------------------------------


def uni_two_sample_study(mu_grid=None, m=100, reps=200, n_mc=100_000, seed=0):
    """Two Gaussian samples N(0,1) and N(mu,1) of size m each.

    Methods: raw bound, beta-adjusted bound, MC permutation p-value and the
    pooled two-sample t-test. MC draws are shared across replicates (common
    random permutations), which leaves every replicate's p-value valid.
    ``extra["mean_abs_adj_vs_t"]`` is the mean |log2 p_adj - log2 p_t|.
    """
    mu_grid = [round(0.1 * i, 10) for i in range(11)] if mu_grid is None else list(mu_grid)
    split = SampleSplit(m, m)
    n = split.n
    params = analytic_beta_params(split)
    out = {"raw": [], "adjusted": [], "mc": [], "t-test": []}
    gaps = []
    for gi, mu in enumerate(mu_grid):
        rng = _rng(seed, 0, gi)
        x = rng.standard_normal((reps, n))
        x[:, m:] += mu
        s = x.std(axis=1, ddof=1)
        t_obs = np.abs(x[:, :m].mean(1) - x[:, m:].mean(1)) / s
        raw = univariate_bound_values(t_obs, split)
        adj = np.array([min(1.0, params.c0 * reg_inc_beta(p, params)) for p in raw])
        tt = stats.ttest_ind(x[:, :m], x[:, m:], axis=1).pvalue
        # MC: every replicate against the same permutation stream.
        total = x.sum(axis=1)
        count = np.zeros(reps, dtype=np.int64)
        tol = np.abs(t_obs) * np.finfo(float).eps * 100
        for block in iter_sign_blocks(n, n_mc, seed, STREAM_MC):
            sum1 = (block @ x.T + total) / 2.0  # (B, reps)
            tnull = np.abs(sum1 / m - (total - sum1) / m) / s
            count += np.count_nonzero(tnull >= t_obs - tol, axis=0)
        mc = (count + 1) / (n_mc + 1)
        out["raw"].append(float(np.mean(np.log2(raw))))
        out["adjusted"].append(float(np.mean(np.log2(adj))))
        out["mc"].append(float(np.mean(np.log2(mc))))
        out["t-test"].append(float(np.mean(np.log2(tt))))
        gaps.append(float(np.mean(np.abs(np.log2(adj) - np.log2(tt)))))
    return StudyResult("uni-two-sample", mu_grid, out, reps, {"mean_abs_adj_vs_t": gaps, "n_mc": n_mc})


# -- univariate k-sample ---------------------------------------------------------


def uni_ksample_study(shift_grid=None, k=4, m=20, reps=200, r=20, n_mc=1000, seed=0, c=64.0):
    """k Gaussian samples of size m, the last shifted; synchronized global test.

    ``extra["mean_abs_log2_ratio"]`` compares calibrated and MC p-values,
    both clipped at the MC floor 1/(n_mc+1).
    """
    shift_grid = [0.25 * i for i in range(9)] if shift_grid is None else list(shift_grid)
    cfg = BoundConfig.uniform(c)
    floor = math.log2(1.0 / (n_mc + 1))
    out = {"calibrated": [], "mc": [], "raw": []}
    gaps = []
    for gi, mu in enumerate(shift_grid):
        la, lm, lr, d = [], [], [], []
        for rep in range(reps):
            rng = _rng(seed, 1, gi, rep)
            samples = [rng.standard_normal(m) for _ in range(k - 1)] + [rng.standard_normal(m) + mu]
            rpt = global_test(samples, cfg, r=r, seed=seed + rep, n_mc=n_mc)
            a = max(math.log2(max(rpt.p_adjusted, 1e-300)), floor)
            b = max(math.log2(rpt.p_mc.p_hat), floor)
            la.append(a)
            lm.append(b)
            lr.append(math.log2(max(rpt.p_raw, 1e-300)))
            d.append(abs(a - b))
        out["calibrated"].append(float(np.mean(la)))
        out["mc"].append(float(np.mean(lm)))
        out["raw"].append(float(np.mean(lr)))
        gaps.append(float(np.mean(d)))
    return StudyResult("uni-ksample", shift_grid, out, reps, {"mean_abs_log2_ratio": gaps, "floor_log2": floor})


# -- curves ----------------------------------------------------------------------


def _brownian_kernel(grid, nugget=0.05):
    return np.minimum.outer(grid, grid) + nugget * np.eye(grid.size)


def _gaussian_curves(rng, grid, cov_root, n, mean=None):
    vals = rng.standard_normal((n, grid.size)) @ cov_root
    if mean is not None:
        vals = vals + mean
    return [GridCurve(grid, v) for v in vals]


def curves_mean_study(shift_grid=None, m=30, grid_points=31, reps=100, r=10, n_mc=1000, q=2.0, seed=0):
    """Mean-shift power sweep for curves in L^q (shift function t -> delta * t)."""
    shift_grid = [0.0, 0.25, 0.5, 0.75, 1.0] if shift_grid is None else list(shift_grid)
    grid = np.linspace(0.0, 1.0, grid_points)
    root = matrix_sqrt(_brownian_kernel(grid))
    spec = NormSpec("function", q)
    out = {"adjusted": [], "mc": [], "raw": []}
    for gi, delta in enumerate(shift_grid):
        la, lm, lr = [], [], []
        for rep in range(reps):
            rng = _rng(seed, 2, gi, rep)
            a = _gaussian_curves(rng, grid, root, m)
            b = _gaussian_curves(rng, grid, root, m, mean=delta * grid)
            rpt = oneway_analysis([a, b], spec, r=r, seed=seed + rep, n_mc=n_mc, with_global=False)[0][0]
            la.append(math.log2(max(rpt.p_adjusted, 1e-300)))
            lm.append(math.log2(rpt.p_mc.p_hat))
            lr.append(math.log2(max(rpt.p_raw, 1e-300)))
        out["adjusted"].append(float(np.mean(la)))
        out["mc"].append(float(np.mean(lm)))
        out["raw"].append(float(np.mean(lr)))
    return StudyResult("curves-mean", shift_grid, out, reps)


def null_calibration_study(kind="curves", q=2.0, reps=100, r=10, seed=0, m=30, grid_points=31, group_size=10, op_grid=12):
    """Adjusted p-values under the null and their KS test against Uniform[0,1].

    kind="curves": two groups of m Gaussian curves, L^q norm.
    kind="operators": two groups of m covariance operators, each the
    empirical covariance of ``group_size`` Gaussian curves; S^q norm.
    """
    pvals = []
    if kind == "curves":
        grid = np.linspace(0.0, 1.0, grid_points)
        root = matrix_sqrt(_brownian_kernel(grid))
        spec = NormSpec("function", q)
    elif kind == "operators":
        grid = np.linspace(0.0, 1.0, op_grid)
        root = matrix_sqrt(_brownian_kernel(grid))
        spec = NormSpec("schatten", q)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    for rep in range(reps):
        rng = _rng(seed, 3, rep)
        if kind == "curves":
            groups = [_gaussian_curves(rng, grid, root, m) for _ in range(2)]
        else:
            curves = _gaussian_curves(rng, grid, root, 2 * m * group_size)
            sample = LabeledSample(curves, ["a"] * (m * group_size) + ["b"] * (m * group_size))
            ops = curves_to_operators(sample, group_size, seed=rep)
            groups = [np.stack(ops.items[:m]), np.stack(ops.items[m:])]
        rpt = oneway_analysis(groups, spec, r=r, seed=seed + rep, with_global=False)[0][0]
        pvals.append(rpt.p_adjusted)
    ks = stats.kstest(pvals, "uniform")
    res = StudyResult(f"null-calibration-{kind}", [0.0], {"adjusted": [float(np.mean(np.log2(np.maximum(pvals, 1e-300))))]}, reps)
    res.extra = {"ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue), "pvalues": [float(p) for p in pvals], "norm": spec.label()}
    return res


# -- covariance operators along a Procrustes path ------------------------------


def default_procrustes_pair(grid_points=20):
    """Two fixed synthetic covariance kernels on [0, 1].

    Sigma_a is Brownian motion plus a nugget; Sigma_b blends it with a
    squared-exponential kernel, so the two differ in shape as well as scale.
    """
    grid = np.linspace(0.0, 1.0, grid_points)
    sa = _brownian_kernel(grid)
    se = np.exp(-0.5 * (np.subtract.outer(grid, grid) / 0.25) ** 2)
    sb = 0.8 * np.minimum.outer(grid, grid) + 0.2 * se + 0.05 * np.eye(grid_points)
    return grid, sa, sb


def covariance_items(a, b):
    """Rank-one operators ``X X^T`` of group-centred curves (rows of a and b)."""
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    x = np.concatenate([a, b])
    return np.einsum("ni,nj->nij", x, x)


def procrustes_study(gamma_grid=None, n=30, reps=200, r=10, n_mc=512, q=1.0, seed=0, pair=None):
    """Covariance test along ``Sigma(gamma)`` from Sigma_a towards Sigma_b.

    Group 1 has covariance Sigma_a, group 2 covariance Sigma(gamma); both
    n Gaussian curves. Items are the rank-one operators of the group-centred
    curves and the test uses the S^q norm.
    ``extra`` has Spearman correlations of the mean curves against gamma
    and the mean |log2 adjusted - log2 MC| per grid point (adjusted clipped
    at the MC floor).
    """
    gamma_grid = [0.5 * i for i in range(13)] if gamma_grid is None else list(gamma_grid)
    grid, sa, sb = default_procrustes_pair() if pair is None else pair
    spec = NormSpec("schatten", q)
    root_a = matrix_sqrt(sa)
    floor = math.log2(1.0 / (n_mc + 1))
    out = {"adjusted": [], "mc": [], "raw": []}
    gaps = []
    for gi, g in enumerate(gamma_grid):
        root_g = matrix_sqrt(covariance_path(sa, sb, g))
        la, lm, lr = [], [], []
        for rep in range(reps):
            rng = _rng(seed, 4, gi, rep)
            a = rng.standard_normal((n, grid.size)) @ root_a
            b = rng.standard_normal((n, grid.size)) @ root_g
            ops = covariance_items(a, b)
            rpt = oneway_analysis([ops[:n], ops[n:]], spec, r=r, seed=seed + rep, n_mc=n_mc, with_global=False)[0][0]
            la.append(max(math.log2(max(rpt.p_adjusted, 1e-300)), floor))
            lm.append(math.log2(rpt.p_mc.p_hat))
            lr.append(math.log2(max(rpt.p_raw, 1e-300)))
        out["adjusted"].append(float(np.mean(la)))
        out["mc"].append(float(np.mean(lm)))
        out["raw"].append(float(np.mean(lr)))
        gaps.append(float(abs(np.mean(la) - np.mean(lm))))
    extra = {
        "spearman_adjusted": float(stats.spearmanr(gamma_grid, out["adjusted"]).statistic),
        "spearman_mc": float(stats.spearmanr(gamma_grid, out["mc"]).statistic),
        "abs_log2_gap": gaps,
        "norm": spec.label(),
    }
    return StudyResult("operators-procrustes", gamma_grid, out, reps, extra)


SCENARIOS = {
    "uni-two-sample": uni_two_sample_study,
    "uni-ksample": uni_ksample_study,
    "curves-mean": curves_mean_study,
    "operators-procrustes": procrustes_study,
    "null-calibration": null_calibration_study,
}
