"""Analytic tail bounds for permutation statistics and the statistics they bound.

Univariate two-sample tests use a normalized mean difference whose
permutation tail is bounded by ``exp(-n t^2 / (2 ceil(kappa+1)^3))``.
Balanced Banach-space tests use the norm of the signed sum of centred items
with sub-Gaussian bound ``exp(-t^2 / (c scale^2))``. The synchronized
k-sample test bounds ``||X^T eps||`` by ``exp(-t^2 / (c S))`` with
``S = ||X X^T||_{S^2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import DegenerateDataError, DomainError, UnsupportedDesignError
from .linalg import (
    GridCurve,
    NormSpec,
    batch_norm,
    check_symmetric,
    commutative_scale,
    noncomm_scale,
    schatten_norm,
    trapezoid_weights,
)

__all__ = [
    "SampleSplit",
    "BoundConfig",
    "TestStatistic",
    "BanachData",
    "univariate_statistic",
    "univariate_null_statistics",
    "univariate_tail_bound",
    "univariate_bound_values",
    "banach_statistic",
    "commutative_tail_bound",
    "noncommutative_tail_bound",
    "subgaussian_bound_values",
    "build_sync_matrix",
    "center_columns",
    "canonical_signs",
    "sync_statistic",
    "sync_tail_bound",
    "sync_bound_values",
    "global_statistic",
    "pair_index",
]

KINDS = ("univariate", "banach-sum", "sync-global")


@dataclass(frozen=True)
class SampleSplit:
    """Group sizes of a two-sample test; kappa is derived, never supplied."""

    m1: int
    m2: int

    def __post_init__(self):
        for name in ("m1", "m2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")

    @property
    def n(self) -> int:
        return self.m1 + self.m2

    @property
    def kappa(self) -> Fraction:
        return Fraction(max(self.m1, self.m2), min(self.m1, self.m2))

    @property
    def ceil_kappa_plus_one(self) -> int:
        # Exact rational ceiling: no float rounding at integer kappa.
        return math.ceil(self.kappa + 1)

    @property
    def balanced(self) -> bool:
        return self.m1 == self.m2


@dataclass(frozen=True)
class BoundConfig:
    """Constants of the sub-Gaussian bounds; c = 64 by default."""

    c_commutative: float = 64.0
    c_noncommutative: float = 64.0
    c_sync: float = 64.0
    calibrate: bool = True

    def __post_init__(self):
        for name in ("c_commutative", "c_noncommutative", "c_sync"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")

    @classmethod
    def uniform(cls, c=64.0, calibrate=True):
        return cls(c, c, c, calibrate)

    def to_dict(self):
        return {
            "c_commutative": self.c_commutative,
            "c_noncommutative": self.c_noncommutative,
            "c_sync": self.c_sync,
            "calibrate": self.calibrate,
        }


@dataclass(frozen=True)
class TestStatistic:
    """An observed statistic with the scale its bound divides by."""

    value: float
    scale: float
    kind: str
    space: str | None = field(default=None, compare=False)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown statistic kind {self.kind!r}")
        if not (math.isfinite(self.value) and self.value >= 0):
            raise DomainError(f"statistic value must be finite and >= 0, got {self.value!r}")
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise DomainError(f"statistic scale must be finite and >= 0, got {self.scale!r}")


# -- univariate ------------------------------------------------------------


def _pooled_sd(values):
    s = float(np.std(values, ddof=1))
    if not s > 0:
        raise DegenerateDataError("all observations are equal; the standardized statistic is undefined")
    return s


def univariate_statistic(values, split: SampleSplit) -> TestStatistic:
    """``|mean(group 1) - mean(group 2)| / s_n``.

    The first ``split.m1`` entries of ``values`` form group 1; ``s_n`` is the
    sample standard deviation of the pooled values.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size != split.n:
        raise DomainError(f"expected {split.n} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("values contain non-finite entries")
    s = _pooled_sd(x)
    t = abs(x[: split.m1].mean() - x[split.m1:].mean()) / s
    return TestStatistic(float(t), s, "univariate")


def univariate_null_statistics(values, split: SampleSplit):
    """Evaluator for reassignment vectors: the statistic under each relabeling."""
    x = np.asarray(values, dtype=float).ravel()
    s = _pooled_sd(x)
    total = x.sum()

    def evaluate(signs):
        sum1 = (signs @ x + total) / 2.0
        return np.abs(sum1 / split.m1 - (total - sum1) / split.m2) / s

    return evaluate


def univariate_bound_values(t, split: SampleSplit):
    """Vectorized univariate bound."""
    t = np.asarray(t, dtype=float)
    k = split.ceil_kappa_plus_one
    return np.minimum(1.0, np.exp(-split.n * t * t / (2.0 * k**3)))


def univariate_tail_bound(stat: TestStatistic, split: SampleSplit) -> float:
    """``min(1, exp(-n t^2 / (2 ceil(kappa+1)^3)))``."""
    if stat.kind != "univariate":
        raise DomainError("univariate_tail_bound needs a univariate statistic")
    return float(univariate_bound_values(stat.value, split))


# -- Banach-space two-sample ----------------------------------------------


def _item_kind(items):
    if isinstance(items, np.ndarray):
        return {1: "scalar", 2: "vector", 3: "operator"}.get(items.ndim)
    first = items[0]
    if isinstance(first, GridCurve):
        return "curve"
    a = np.asarray(first)
    return {0: "scalar", 1: "vector", 2: "operator"}.get(a.ndim)


@dataclass(frozen=True, eq=False)
class BanachData:
    """Items stacked as an array with the norm that applies to them.

    ``x`` is (n, d) for vectors and curves, (n, d, d) for operators;
    ``weights`` holds trapezoid weights for curves and is ``None`` otherwise.
    """

    x: np.ndarray
    spec: NormSpec
    weights: np.ndarray | None = None
    grid: np.ndarray | None = None

    @property
    def is_operator(self) -> bool:
        return self.x.ndim == 3

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_items(cls, items, spec: NormSpec) -> "BanachData":
        if len(items) == 0:
            raise DomainError("no items")
        kind = _item_kind(items)
        if kind is None:
            raise DomainError("unsupported item type")
        if kind == "curve":
            if any(not isinstance(c, GridCurve) for c in items):
                raise DomainError("mixed item types")
            grid = items[0].grid
            if any(not np.array_equal(c.grid, grid) for c in items):
                raise DomainError("curves do not share a grid")
            if spec.space != "function":
                raise DomainError(f"curves need an L^q norm, got {spec.label()}")
            x = np.stack([c.values for c in items])
            return cls(x, spec, trapezoid_weights(grid), grid)
        if not isinstance(items, np.ndarray) and any(isinstance(c, GridCurve) for c in items):
            raise DomainError("mixed item types")
        try:
            x = np.asarray(items, dtype=float)
        except ValueError as exc:
            raise DomainError(f"mixed item shapes: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise DomainError("items contain non-finite entries")
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim == 3:
            if spec.space != "schatten":
                raise DomainError(f"operators need a Schatten norm, got {spec.label()}")
            check_symmetric(x, "operator")
            return cls(x, spec)
        if x.ndim != 2:
            raise DomainError("unsupported item shape")
        if spec.space == "schatten":
            raise DomainError("vectors need an l^q norm")
        if spec.space == "function":
            raise DomainError("L^q norms need curves on a grid")
        return cls(x, spec)

    def centered(self) -> np.ndarray:
        return self.x - self.x.mean(axis=0)

    def norms(self, sums) -> np.ndarray:
        """Norm of each signed sum in a batch (leading axis)."""
        sums = np.asarray(sums, dtype=float)
        if self.is_operator:
            return np.asarray(schatten_norm(sums, self.spec, symmetric=True), dtype=float)
        return batch_norm(sums, self.spec, self.weights)

    def signed_sums(self, signs, xc=None):
        xc = self.centered() if xc is None else xc
        return np.tensordot(np.asarray(signs, dtype=float), xc, axes=(1, 0))

    def scale(self, xc=None) -> float:
        xc = self.centered() if xc is None else xc
        if self.is_operator:
            return noncomm_scale(xc, self.spec)
        return commutative_scale(xc, self.spec, self.weights, centered=True)

    def flat(self, xc):
        """Items as vectors whose dot product is the Hilbert inner product."""
        if self.is_operator:
            return xc.reshape(xc.shape[0], -1)
        if self.weights is not None:
            return xc * np.sqrt(self.weights)
        return xc


def _labels_to_signs(labels, n):
    lab = np.asarray(labels)
    if lab.shape != (n,):
        raise DomainError(f"expected {n} labels, got shape {lab.shape}")
    if lab.dtype == bool:
        return np.where(lab, 1.0, -1.0)
    levels = list(dict.fromkeys(lab.tolist()))
    if set(levels) <= {1, -1} and len(levels) == 2:
        return lab.astype(float)
    if len(levels) != 2:
        raise DomainError(f"expected exactly two groups, got {len(levels)}")
    return np.where(lab == levels[0], 1.0, -1.0)


def banach_statistic(items, labels, spec: NormSpec) -> TestStatistic:
    """Norm of the difference of group sums of pooled-mean-centred items.

    Parameters
    ----------
    items : (n, d) array of vectors, list of GridCurve, or (n, d, d) operators
    labels : two-group labels (+/-1, bool, or any two distinct values; the
        first value seen is group 1)
    spec : NormSpec matching the item type

    Returns
    -------
    TestStatistic
        ``kind="banach-sum"``; ``scale`` is ``sqrt(n-1) ||Sigma_hat^{1/2}||_{S^q}``
        for vectors and curves and ``noncomm_scale`` of the centred items for
        operators.
    """
    data = BanachData.from_items(items, spec)
    signs = _labels_to_signs(labels, data.n)
    if np.sum(signs) != 0:
        raise UnsupportedDesignError("Banach-space bounds need balanced groups")
    xc = data.centered()
    value = float(data.norms(data.signed_sums(signs[None], xc))[0])
    return TestStatistic(value, data.scale(xc), "banach-sum", "operator" if data.is_operator else "commutative")


def subgaussian_bound_values(t, scale, c):
    """``min(1, exp(-t^2 / (c scale^2)))``, vectorized; 1 where t = 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(t > 0, -t * t / (c * scale * scale), 0.0)
    return np.minimum(1.0, np.exp(expo))


def commutative_tail_bound(stat: TestStatistic, cfg: BoundConfig) -> float:
    """``min(1, exp(-t^2 / (c scale^2)))`` with ``c = cfg.c_commutative``."""
    if stat.kind != "banach-sum":
        raise DomainError("commutative_tail_bound needs a banach-sum statistic")
    return float(subgaussian_bound_values(stat.value, stat.scale, cfg.c_commutative))


def noncommutative_tail_bound(stat: TestStatistic, cfg: BoundConfig) -> float:
    """``min(1, exp(-t^2 / (c S^2)))`` with ``c = cfg.c_noncommutative``."""
    if stat.kind != "banach-sum":
        raise DomainError("noncommutative_tail_bound needs a banach-sum statistic")
    return float(subgaussian_bound_values(stat.value, stat.scale, cfg.c_noncommutative))


# -- synchronized k-sample --------------------------------------------------


def pair_index(k):
    """Pairs (i, j), i < j, in lexicographic order."""
    return list(combinations(range(k), 2))


def build_sync_matrix(samples):
    """The 2m x C(k,2) matrix whose (i,j) column stacks sample i over sample j."""
    samples = [np.asarray(s, dtype=float).ravel() for s in samples]
    k = len(samples)
    if k < 2:
        raise DomainError("need at least two samples")
    m = samples[0].size
    if m < 1 or any(s.size != m for s in samples):
        raise UnsupportedDesignError("the synchronized method needs balanced samples")
    return np.column_stack([np.concatenate([samples[i], samples[j]]) for i, j in pair_index(k)])


def center_columns(x):
    """Subtract each column's mean (the pooled pair mean)."""
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=0)


def canonical_signs(n):
    """+1 on the first n/2 rows, -1 on the rest."""
    if n % 2:
        raise DomainError("need an even number of rows")
    return np.r_[np.ones(n // 2), -np.ones(n // 2)]


def sync_statistic(x, signs) -> TestStatistic:
    """``||X^T eps||`` with scale ``S = ||X X^T||_{S^2}``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    e = np.asarray(signs, dtype=float).ravel()
    if e.size != x.shape[0]:
        raise DomainError(f"sign vector length {e.size} does not match {x.shape[0]} rows")
    if not np.all(np.abs(e) == 1) or np.sum(e) != 0:
        raise DomainError("sign vector must be +/-1 with zero sum")
    value = float(np.linalg.norm(x.T @ e))
    # ||X X^T||_F = ||X^T X||_F; the smaller Gram is cheaper.
    scale = float(np.linalg.norm(x.T @ x))
    return TestStatistic(value, scale, "sync-global")


def sync_bound_values(t, s, c):
    """``min(1, exp(-t^2 / (c S)))``, vectorized; S is not squared."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(t > 0, -t * t / (c * s), 0.0)
    return np.minimum(1.0, np.exp(expo))


def sync_tail_bound(stat: TestStatistic, cfg: BoundConfig) -> float:
    """``min(1, exp(-t^2 / (c S)))`` with ``c = cfg.c_sync``."""
    if stat.kind != "sync-global":
        raise DomainError("sync_tail_bound needs a sync-global statistic")
    return float(sync_bound_values(stat.value, stat.scale, cfg.c_sync))


def global_statistic(pairwise, sizes):
    """``sum_{i<j} n_i n_j (T^{(ij)})^2``.

    ``pairwise`` is either a mapping ``{(i, j): T}`` or a sequence in
    lexicographic pair order.
    """
    sizes = [int(s) for s in sizes]
    pairs = pair_index(len(sizes))
    if isinstance(pairwise, dict):
        missing = [p for p in pairs if p not in pairwise]
        if missing:
            raise DomainError(f"missing pairwise statistics for {missing}")
        vals = [pairwise[p] for p in pairs]
    else:
        vals = list(pairwise)
        if len(vals) != len(pairs):
            raise DomainError(f"expected {len(pairs)} pairwise statistics, got {len(vals)}")
    return float(sum(sizes[i] * sizes[j] * float(t) ** 2 for (i, j), t in zip(pairs, vals)))
