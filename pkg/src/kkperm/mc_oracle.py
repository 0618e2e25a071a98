"""Permutation ground truth: sign-vector sampling, Monte-Carlo and exact p-values.

A two-group reassignment of ``n`` items with ``m1`` items in group 1 is
encoded as a vector of +1 (group 1) and -1 (group 2). For balanced splits
these are exactly the zero-sum Rademacher vectors.

Random draws are organised in blocks of :data:`BLOCK` permutations. Block
``b`` of stream ``s`` is generated from ``SeedSequence(seed,
spawn_key=s + (b,))``, so the j-th permutation depends only on ``(seed,
stream, j)`` and never on how the work is chunked or parallelised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import DomainError, SizeError

__all__ = [
    "BLOCK",
    "SignVector",
    "McEstimate",
    "sample_sign_vector",
    "sign_block",
    "iter_sign_blocks",
    "draw_signs",
    "count_exceedances",
    "mc_pvalue",
    "exhaustive_pvalue",
    "mc_sync_pvalue",
    "EXHAUSTIVE_LIMIT",
    "stratified_permutations",
]

BLOCK = 1024
EXHAUSTIVE_LIMIT = 10_000
# Streams used by the library; callers may use any other tuple.
STREAM_MC = (0,)
STREAM_CALIBRATION = (1,)

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SignVector:
    """A +/-1 vector whose entries sum to zero."""

    signs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.signs)
        if s.ndim != 1 or not np.all(np.abs(s) == 1):
            raise DomainError("sign vector entries must be +1 or -1")
        if int(np.sum(s)) != 0:
            raise DomainError("sign vector must sum to zero")
        object.__setattr__(self, "signs", s.astype(float))

    def __len__(self):
        return self.signs.size


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo permutation p-value with the add-one convention."""

    p_hat: float
    n_perms: int
    std_err: float
    exceed_count: int

    @classmethod
    def from_count(cls, exceed_count, n_perms):
        p = (exceed_count + 1) / (n_perms + 1)
        return cls(p, int(n_perms), math.sqrt(p * (1 - p) / n_perms), int(exceed_count))

    def to_dict(self):
        return {
            "p_hat": self.p_hat,
            "n_perms": self.n_perms,
            "std_err": self.std_err,
            "exceed_count": self.exceed_count,
        }


def _block_rng(seed, stream, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(stream) + (int(block),))
    return np.random.default_rng(ss)


def _check_split(n, m1):
    if n < 2 or not (1 <= m1 < n):
        raise DomainError(f"invalid split n={n}, m1={m1}")


@lru_cache(maxsize=256)
def _cached_block(seed, stream, block, n, m1):
    rng = _block_rng(seed, stream, block)
    # The m1 smallest of n iid uniforms mark a uniformly random m1-subset.
    keys = rng.random((BLOCK, n))
    rank = np.argsort(np.argsort(keys, axis=1), axis=1)
    out = np.where(rank < m1, 1, -1).astype(np.int8)
    out.setflags(write=False)
    return out


def sign_block(seed, stream, block, n, m1=None):
    """Block ``block`` of :data:`BLOCK` reassignment vectors as floats.

    Blocks are memoised (compactly, as int8), so repeated studies that reuse
    a seed pay for the sampling once.
    """
    m1 = n // 2 if m1 is None else int(m1)
    _check_split(n, m1)
    return _cached_block(int(seed), tuple(stream), int(block), int(n), m1).astype(float)


def draw_signs(n, count, seed, stream=STREAM_MC, m1=None, start=0):
    """Reassignment vectors ``start .. start+count-1`` of a stream, as (count, n)."""
    parts = list(iter_sign_blocks(n, count, seed, stream, m1, start))
    if not parts:
        return np.empty((0, n))
    return np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0]


def iter_sign_blocks(n, count, seed, stream=STREAM_MC, m1=None, start=0):
    """Yield consecutive slices of the stream covering ``count`` draws."""
    j = start
    stop = start + count
    while j < stop:
        b, off = divmod(j, BLOCK)
        take = min(BLOCK - off, stop - j)
        yield sign_block(seed, stream, b, n, m1)[off:off + take]
        j += take


def sample_sign_vector(n, rng):
    """One uniform zero-sum sign vector of even length ``n``.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if n <= 0 or n % 2:
        raise DomainError(f"zero-sum sign vectors need an even positive length, got {n}")
    rng = np.random.default_rng(rng)
    s = np.full(n, -1.0)
    s[rng.permutation(n)[: n // 2]] = 1.0
    return SignVector(s)


def _tie_tolerance(observed):
    # Relative slack so that permutations reproducing the observed value up
    # to rounding count as ties.
    return abs(observed) * np.finfo(float).eps * 100


def count_exceedances(values, observed):
    """Number of null values >= observed, ties included."""
    values = np.asarray(values, dtype=float)
    return int(np.count_nonzero(values >= observed - _tie_tolerance(observed)))


def mc_pvalue(evaluator: Evaluator, observed, n_perms, seed, n, m1=None, stream=STREAM_MC):
    """Monte-Carlo permutation p-value ``(b+1)/(N+1)``.

    Parameters
    ----------
    evaluator : callable
        Maps a (B, n) array of +/-1 reassignment vectors to B statistics.
    observed : float
        Observed statistic.
    n_perms : int
        Number of random reassignments N.
    seed : int
    n, m1 : int
        Number of items and size of group 1 (``n // 2`` by default).
    """
    if int(n_perms) < 1:
        raise DomainError(f"n_perms must be >= 1, got {n_perms}")
    b = 0
    for block in iter_sign_blocks(n, int(n_perms), seed, stream, m1):
        b += count_exceedances(evaluator(block), observed)
    return McEstimate.from_count(b, int(n_perms))


def exhaustive_pvalue(evaluator: Evaluator, observed, n, m1):
    """Exact permutation p-value over all C(n, m1) reassignments."""
    total = math.comb(n, m1)
    if total > EXHAUSTIVE_LIMIT:
        raise SizeError(f"C({n},{m1}) = {total} exceeds the enumeration limit {EXHAUSTIVE_LIMIT}")
    _check_split(n, m1)
    signs = np.full((total, n), -1.0)
    for row, idx in enumerate(combinations(range(n), m1)):
        signs[row, list(idx)] = 1.0
    return count_exceedances(evaluator(signs), observed) / total


def mc_sync_pvalue(x, n_perms, seed, stream=STREAM_MC):
    """Synchronized k-sample permutation p-value.

    Each draw is one zero-sum sign vector applied to every column of the
    synchronized matrix ``x`` (2m rows); the statistic is ``||x^T eps||``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n % 2:
        raise DomainError("synchronized matrix needs an even number of rows")
    canon = np.r_[np.ones(n // 2), -np.ones(n // 2)]
    observed = float(np.linalg.norm(canon @ x))
    return mc_pvalue(lambda e: np.linalg.norm(e @ x, axis=1), observed, n_perms, seed, n, n // 2, stream)


def stratified_permutations(strata, count, seed, stream):
    """``count`` random permutations that only move items within a stratum.

    Returns an int array of shape (count, n) whose row ``pi`` satisfies
    ``strata[pi[c]] == strata[c]`` for every position ``c``. With a single
    stratum this is a uniform permutation of all items.
    """
    strata = np.asarray(strata)
    n = strata.size
    _, sid = np.unique(strata, return_inverse=True)
    order0 = np.argsort(sid, kind="stable")
    base = sid[order0].astype(float)
    out = np.empty((count, n), dtype=np.intp)
    j = 0
    while j < count:
        b, off = divmod(j, BLOCK)
        take = min(BLOCK - off, count - j)
        keys = _block_rng(seed, stream, b).random((BLOCK, n))[off:off + take]
        # Sorting stratum id + uniform key shuffles positions inside each
        # stratum while keeping the strata in place.
        within = np.argsort(base + keys, axis=1)
        out[j:j + take][:, order0] = order0[within]
        j += take
    return out
