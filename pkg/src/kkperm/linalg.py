"""Matrix and operator primitives.

Symmetric eigendecomposition, SVD, matrix square roots, q-Schatten norms,
discretized L^q curve norms, empirical covariance operators and the
Procrustes interpolation path between two covariance operators.

Every eigendecomposition or SVD performed here goes through
:data:`DECOMPOSITIONS`, a module-level counter used by the benchmark harness
to report how many decompositions an analysis actually ran.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericError

__all__ = [
    "NormSpec",
    "GridCurve",
    "DecompositionCounter",
    "DECOMPOSITIONS",
    "sym_eig",
    "matrix_sqrt",
    "schatten_norm",
    "schatten_from_values",
    "lq_curve_norm",
    "trapezoid_weights",
    "batch_norm",
    "empirical_covariance",
    "commutative_scale",
    "noncomm_scale",
    "procrustes_delta",
    "covariance_path",
    "check_symmetric",
]

SYM_TOL = 1e-10
PSD_TOL = 1e-8
RANK_TOL = 1e-12

_SPACES = ("sequence", "function", "schatten")


@dataclass(frozen=True)
class NormSpec:
    """Which norm drives a statistic.

    Parameters
    ----------
    space : {"sequence", "function", "schatten"}
        l^q on vectors, L^q on grid curves, or q-Schatten on matrices.
    q : float
        Exponent in [1, inf]; ``math.inf`` selects the sup / operator norm.
    """

    space: str
    q: float

    def __post_init__(self):
        if self.space not in _SPACES:
            raise DomainError(f"unknown norm space {self.space!r}")
        q = float(self.q)
        if math.isnan(q) or q < 1:
            raise DomainError(f"norm exponent q must be >= 1, got {self.q!r}")
        object.__setattr__(self, "q", q)

    @property
    def is_inf(self) -> bool:
        return math.isinf(self.q)

    @classmethod
    def from_flag(cls, flag: str, space: str | None = None) -> "NormSpec":
        """Parse a CLI flag such as ``l2`` or ``sinf``.

        ``l`` flags map to ``sequence`` unless ``space="function"`` is given
        (curves use the same flag names).
        """
        flag = flag.strip().lower()
        if len(flag) < 2 or flag[0] not in "ls":
            raise DomainError(f"unrecognised norm flag {flag!r}")
        tail = flag[1:]
        q = math.inf if tail == "inf" else float(tail)
        if flag[0] == "s":
            return cls("schatten", q)
        return cls(space or "sequence", q)

    def label(self) -> str:
        prefix = {"sequence": "l", "function": "L", "schatten": "S"}[self.space]
        return prefix + ("inf" if self.is_inf else f"{self.q:g}")

    def to_dict(self):
        return {"space": self.space, "q": "inf" if self.is_inf else self.q}


@dataclass(frozen=True, eq=False)
class GridCurve:
    """A curve observed on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or values.ndim != 1 or grid.shape != values.shape:
            raise DomainError("grid and values must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise DomainError("grid curve contains non-finite entries")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


class DecompositionCounter:
    """Counts matrix decompositions; a batch of B matrices counts B."""

    def __init__(self):
        self.count = 0

    def add(self, k=1):
        self.count += int(k)

    def reset(self):
        self.count = 0

    @contextmanager
    def measure(self):
        """Yield a one-element list filled with the count accrued inside."""
        start = self.count
        out = [0]
        try:
            yield out
        finally:
            out[0] = self.count - start


DECOMPOSITIONS = DecompositionCounter()


def _nbatch(a):
    return int(np.prod(a.shape[:-2])) if a.ndim > 2 else 1


def _eigvalsh(a):
    DECOMPOSITIONS.add(_nbatch(a))
    try:
        return np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc


def _eigh(a):
    DECOMPOSITIONS.add(_nbatch(a))
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc


def _svdvals(a):
    DECOMPOSITIONS.add(_nbatch(a))
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from exc


def _svd(a):
    DECOMPOSITIONS.add(_nbatch(a))
    try:
        return np.linalg.svd(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from exc


def check_symmetric(a, name="matrix"):
    """Return ``a`` as a float array, raising DomainError unless symmetric."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DomainError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    asym = np.linalg.norm(a - np.swapaxes(a, -1, -2), axis=(-2, -1))
    size = np.maximum(1.0, np.linalg.norm(a, axis=(-2, -1)))
    if np.any(asym / size > SYM_TOL):
        raise DomainError(f"{name} is not symmetric")
    return a


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    w : ndarray
        Eigenvalues in descending order.
    u : ndarray
        Orthonormal eigenvectors as columns, matching ``w``.
    """
    a = check_symmetric(a)
    w, u = _eigh(0.5 * (a + a.T))
    return w[::-1], u[:, ::-1]


def _clamp_psd(w, name="matrix"):
    top = max(float(np.max(w, initial=0.0)), 0.0)
    if float(np.min(w, initial=0.0)) < -PSD_TOL * top:
        raise DomainError(f"{name} is not positive semi-definite (min eigenvalue {np.min(w):.3g})")
    return np.clip(w, 0.0, None)


def matrix_sqrt(a, psd=True):
    """Symmetric PSD square root ``U D^{1/2} U^T``.

    Eigenvalues down to ``-1e-8 * lambda_max`` are treated as round-off and
    clamped to zero; anything more negative is a DomainError.
    """
    w, u = sym_eig(a)
    w = _clamp_psd(w)
    r = (u * np.sqrt(w)) @ u.T
    return 0.5 * (r + r.T)


def schatten_from_values(s, q):
    """q-norm of non-negative singular values along the last axis."""
    s = np.abs(np.asarray(s, dtype=float))
    if math.isinf(q):
        return s.max(axis=-1, initial=0.0)
    if q == 1:
        return s.sum(axis=-1)
    if q == 2:
        return np.sqrt(np.sum(s * s, axis=-1))
    top = s.max(axis=-1, keepdims=True, initial=0.0)
    safe = np.where(top > 0, top, 1.0)
    return top[..., 0] * np.sum((s / safe) ** q, axis=-1) ** (1.0 / q)


def schatten_norm(a, spec, symmetric=None):
    """q-Schatten norm of a matrix (or a stack of matrices).

    For symmetric input the singular values are the absolute eigenvalues,
    so a symmetric eigensolver is used; ``symmetric=None`` detects it.
    """
    if spec.space != "schatten":
        raise DomainError("schatten_norm needs a NormSpec with space='schatten'")
    a = np.asarray(a, dtype=float)
    if a.ndim < 2:
        raise DomainError("schatten_norm needs a matrix")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    if spec.q == 2:
        # Frobenius norm needs no decomposition.
        out = np.sqrt(np.sum(a * a, axis=(-2, -1)))
        return float(out) if out.ndim == 0 else out
    if symmetric is None:
        symmetric = a.shape[-1] == a.shape[-2] and np.allclose(
            a, np.swapaxes(a, -1, -2), rtol=0, atol=SYM_TOL * max(1.0, np.abs(a).max(initial=0))
        )
    s = _eigvalsh(a) if symmetric else _svdvals(a)
    out = schatten_from_values(s, spec.q)
    return float(out) if np.ndim(out) == 0 else out


def trapezoid_weights(grid):
    """Quadrature weights w with sum(w * f) equal to the trapezoid rule."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise DomainError("trapezoid quadrature needs at least 2 grid points")
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def batch_norm(v, spec, weights=None):
    """l^q or discretized L^q norm along the last axis.

    ``weights`` are quadrature weights (function space); ``None`` means
    unit weights, i.e. the sequence norm.
    """
    v = np.abs(np.asarray(v, dtype=float))
    if spec.is_inf:
        return v.max(axis=-1, initial=0.0)
    q = spec.q
    if weights is None:
        if q == 1:
            return v.sum(axis=-1)
        if q == 2:
            return np.sqrt(np.sum(v * v, axis=-1))
        return np.sum(v**q, axis=-1) ** (1.0 / q)
    if q == 1:
        return v @ weights
    if q == 2:
        return np.sqrt((v * v) @ weights)
    return ((v**q) @ weights) ** (1.0 / q)


def lq_curve_norm(c, spec):
    """L^q norm of a grid curve by trapezoid quadrature; sup norm for q = inf."""
    if spec.is_inf:
        return float(np.max(np.abs(c.values)))
    return float(batch_norm(c.values, spec, trapezoid_weights(c.grid)))


def _stack_items(items):
    """Stack vectors or shared-grid curves into an (n, d) array."""
    if isinstance(items, np.ndarray):
        arr = np.asarray(items, dtype=float)
        return arr, None
    items = list(items)
    if not items:
        raise DomainError("no items")
    if isinstance(items[0], GridCurve):
        grid = items[0].grid
        for c in items[1:]:
            if not isinstance(c, GridCurve) or c.grid.shape != grid.shape or not np.array_equal(c.grid, grid):
                raise DomainError("curves do not share a grid")
        return np.stack([c.values for c in items]), grid
    try:
        arr = np.asarray(items, dtype=float)
    except ValueError as exc:
        raise DomainError(f"items have mismatched dimensions: {exc}") from exc
    return arr, None


def empirical_covariance(items, center=True):
    """Empirical covariance ``(n-1)^{-1} sum X_i X_i^T``.

    Parameters
    ----------
    items : sequence of GridCurve on a shared grid, or (n, d) array of vectors
    center : bool
        Subtract the sample mean first.

    Returns
    -------
    ndarray
        d x d symmetric PSD matrix (pointwise kernel on the grid for curves).
    """
    x, _ = _stack_items(items)
    if x.ndim != 2:
        raise DomainError("items must be vectors or curves")
    n = x.shape[0]
    if n < 2:
        raise DomainError("empirical covariance needs at least 2 items")
    if center:
        x = x - x.mean(axis=0)
    c = x.T @ x / (n - 1)
    return 0.5 * (c + c.T)


def commutative_scale(x, spec, weights=None, centered=False):
    """``||C^{1/2}||_{S^q}`` for ``C = sum (X_i - Xbar)(X_i - Xbar)^T``.

    This equals ``sqrt(n-1) * ||Sigma_hat^{1/2}||_{S^q}``. For curves the
    operator is discretized with quadrature weights (``W^{1/2} C W^{1/2}``),
    which is the matrix whose eigenvalues approximate those of the integral
    operator. Computed from the smaller of the two Gram matrices, so one
    eigendecomposition is used.
    """
    x = np.asarray(x, dtype=float)
    if not centered:
        x = x - x.mean(axis=0)
    if weights is not None:
        x = x * np.sqrt(weights)
    gram = x @ x.T if x.shape[0] <= x.shape[1] else x.T @ x
    lam = np.clip(_eigvalsh(gram), 0.0, None)
    return float(schatten_from_values(np.sqrt(lam), spec.q))


def noncomm_scale(items, spec):
    """Scale of the non-commutative bound.

    ``max(||(sum X X^*)^{1/2}||_{S^q}, ||(sum X^* X)^{1/2}||_{S^q})``; for
    symmetric items both branches are ``||(sum X^2)^{1/2}||_{S^q}`` and one
    eigendecomposition suffices.
    """
    x = np.asarray(items, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] == 0:
        raise DomainError("noncomm_scale needs a non-empty list of matrices")
    sym = x.shape[1] == x.shape[2] and np.allclose(
        x, np.swapaxes(x, 1, 2), rtol=0, atol=SYM_TOL * max(1.0, np.abs(x).max(initial=0))
    )
    if sym:
        a = np.einsum("nij,njk->ik", x, x)
        lam = np.clip(_eigvalsh(0.5 * (a + a.T)), 0.0, None)
        return float(schatten_from_values(np.sqrt(lam), spec.q))
    left = np.einsum("nij,nkj->ik", x, x)
    right = np.einsum("nji,njk->ik", x, x)
    vals = []
    for a in (left, right):
        lam = np.clip(_eigvalsh(0.5 * (a + a.T)), 0.0, None)
        vals.append(float(schatten_from_values(np.sqrt(lam), spec.q)))
    return max(vals)


def _psd_pair(sigma_a, sigma_b):
    a = check_symmetric(sigma_a, "sigma_a")
    b = check_symmetric(sigma_b, "sigma_b")
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch {a.shape} vs {b.shape}")
    return matrix_sqrt(a), matrix_sqrt(b)


def procrustes_delta(sigma_a, sigma_b):
    """Procrustes step between the square roots of two covariance operators.

    Returns ``Sigma_b^{1/2} R - Sigma_a^{1/2}`` where ``R = U V^T`` comes
    from the SVD of ``(Sigma_b^{1/2})^T Sigma_a^{1/2}``; R is the rotation
    bringing ``Sigma_b^{1/2}`` closest to ``Sigma_a^{1/2}``.
    """
    ra, rb = _psd_pair(sigma_a, sigma_b)
    u, _, vt = _svd(rb.T @ ra)
    r = u @ vt
    return rb @ r - ra


def covariance_path(sigma_a, sigma_b, gamma):
    """``[Sigma_a^{1/2} + gamma Delta][...]^T``; gamma=0 and 1 give the endpoints."""
    gamma = float(gamma)
    if not (math.isfinite(gamma) and gamma >= 0):
        raise DomainError(f"gamma must be finite and >= 0, got {gamma!r}")
    ra, _ = _psd_pair(sigma_a, sigma_b)
    m = ra + gamma * procrustes_delta(sigma_a, sigma_b)
    out = m @ m.T
    return 0.5 * (out + out.T)
