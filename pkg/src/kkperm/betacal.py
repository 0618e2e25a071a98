"""Beta calibration of raw bound p-values.

Two routes:

* univariate tests map the raw bound through the closed-form
  ``C0 * I(p; alpha, 1/2)`` with ``alpha = ceil(kappa+1)^3 / (2 + kappa + 1/kappa)``;
* Banach-space and synchronized tests fit a Beta law by the method of
  moments to the bound p-values of ``r`` random relabelings and return its
  CDF at the observed bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import SampleSplit
from .errors import CalibrationError, DomainError
from .mc_oracle import STREAM_CALIBRATION, draw_signs
from .specfun import BetaParams, log_gamma, reg_inc_beta

__all__ = [
    "CalibrationRecord",
    "analytic_beta_params",
    "analytic_beta_adjust",
    "mom_beta",
    "empirical_beta_transform",
    "calibrate",
    "record_from_pvalues",
    "adjust_with_fallback",
    "DEFAULT_R",
]

DEFAULT_R = 10


@dataclass(frozen=True, eq=False)
class CalibrationRecord:
    """Null bound p-values of r random relabelings and the Beta fitted to them.

    ``params`` is ``None`` when the fit failed; ``failure`` then says why.
    """

    r: int
    null_pvalues: np.ndarray
    params: BetaParams | None
    seed: int
    failure: str | None = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.null_pvalues, dtype=float)
        if self.r < 2 or p.size != self.r:
            raise DomainError(f"a calibration record needs r >= 2 null p-values matching r={self.r}")
        if np.any(~(p > 0)) or np.any(p > 1):
            raise DomainError("null p-values must lie in (0, 1]")
        object.__setattr__(self, "null_pvalues", p)

    def to_dict(self):
        return {
            "r": self.r,
            "seed": self.seed,
            "null_pvalues": [float(v) for v in self.null_pvalues],
            "params": None if self.params is None else self.params.to_dict(),
            "failure": self.failure,
        }


def analytic_beta_params(split: SampleSplit) -> BetaParams:
    """(alpha, 1/2, C0) for the closed-form univariate adjustment."""
    kappa = split.kappa
    k = split.ceil_kappa_plus_one
    alpha = float(k**3 / (2 + kappa + 1 / kappa))
    c0 = math.sqrt(alpha) * math.exp(log_gamma(alpha) - log_gamma(alpha + 0.5))
    return BetaParams(alpha, 0.5, c0)


def analytic_beta_adjust(p_raw, split: SampleSplit) -> float:
    """``min(1, C0 * I(p_raw; alpha, 1/2))``."""
    p_raw = float(p_raw)
    if not (0.0 < p_raw <= 1.0):
        raise DomainError(f"raw p-value must lie in (0, 1], got {p_raw!r}")
    params = analytic_beta_params(split)
    return min(1.0, params.c0 * reg_inc_beta(p_raw, params))


def mom_beta(pvalues) -> BetaParams:
    """Method-of-moments Beta fit.

    ``alpha = pbar^2 (1 - pbar) / s^2 - pbar`` and
    ``beta = (pbar (1 - pbar) / s^2 - 1)(1 - pbar)`` with ``s^2`` the
    unbiased sample variance.
    """
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size < 2:
        raise CalibrationError("method of moments needs at least two p-values")
    pbar = float(p.mean())
    # np.var of equal values can leave a rounding residue, so test directly.
    s2 = 0.0 if np.all(p == p[0]) else float(p.var(ddof=1))
    if not (0.0 < pbar < 1.0):
        raise CalibrationError(f"mean null p-value {pbar!r} is not strictly inside (0, 1)")
    if not s2 > 0:
        raise CalibrationError("null p-values have zero variance")
    common = pbar * (1.0 - pbar) / s2
    a = pbar * common - pbar
    b = (common - 1.0) * (1.0 - pbar)
    if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
        raise CalibrationError(f"method-of-moments estimates are not positive (alpha={a:.4g}, beta={b:.4g})")
    return BetaParams(a, b)


def empirical_beta_transform(p0, record: CalibrationRecord) -> float:
    """Fitted Beta CDF at the observed bound p-value."""
    if record.params is None:
        raise CalibrationError(record.failure or "calibration record has no fitted parameters")
    p0 = float(p0)
    if not (0.0 <= p0 <= 1.0):
        raise DomainError(f"p-value must lie in [0, 1], got {p0!r}")
    return reg_inc_beta(p0, record.params)


def record_from_pvalues(null_pvalues, seed) -> CalibrationRecord:
    """Fit a record, keeping the failure reason instead of raising."""
    # A bound that underflowed to 0 is replaced by the smallest normal float.
    p = np.maximum(np.asarray(null_pvalues, dtype=float), np.finfo(float).tiny)
    try:
        params, failure = mom_beta(p), None
    except CalibrationError as exc:
        params, failure = None, str(exc)
    return CalibrationRecord(int(p.size), p, params, int(seed), failure)


def calibrate(
    statistic: Callable[[np.ndarray], np.ndarray],
    bound: Callable[[np.ndarray], np.ndarray],
    n: int,
    r: int = DEFAULT_R,
    seed: int = 0,
    m1: int | None = None,
    stream=STREAM_CALIBRATION,
    strict: bool = True,
) -> CalibrationRecord:
    """Draw r relabelings, bound each null statistic, fit a Beta.

    Parameters
    ----------
    statistic : callable
        (r, n) array of +/-1 reassignment vectors -> r statistics.
    bound : callable
        statistics -> raw bound p-values.
    n, m1 : int
        Items and group-1 size (balanced by default).
    strict : bool
        Raise CalibrationError on a failed fit; otherwise return a record
        with ``params=None``.
    """
    if int(r) < 2:
        raise DomainError(f"calibration needs r >= 2, got {r}")
    signs = draw_signs(n, int(r), seed, stream, m1)
    pvals = np.asarray(bound(statistic(signs)), dtype=float)
    rec = record_from_pvalues(pvals, seed)
    if strict and rec.params is None:
        raise CalibrationError(rec.failure)
    return rec


def adjust_with_fallback(p0, record: CalibrationRecord):
    """Adjusted p-value and warning flags; falls back to the raw bound."""
    if record.params is None:
        return float(p0), ["calibration-failed: " + (record.failure or "unknown")]
    return empirical_beta_transform(p0, record), []
