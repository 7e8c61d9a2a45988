"""Distances between prediction vectors and between attention matrices."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateError, DimensionError

__all__ = [
    "MetricsReport",
    "wasserstein1_predictions",
    "wasserstein1_rows",
    "mean_wasserstein_matrices",
    "rmse",
    "pearson_r2",
    "l2_rel",
    "l2_scaled",
    "compare_predictions",
    "GROUND_METRIC",
    "L2_SCALED_NORMALIZER",
]

GROUND_METRIC = "unit-spaced positions |i - j|"
L2_SCALED_NORMALIZER = "row count (vector length for 1-D inputs)"


def _vector_pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.size == 0 or q.size == 0:
        raise DimensionError("empty prediction vector")
    if p.shape != q.shape:
        raise DimensionError(f"length mismatch: {p.size} vs {q.size}")
    return p, q


def wasserstein1_predictions(p, q) -> float:
    """W1 between two equal-size empirical samples (mean gap of sorted values)."""
    p, q = _vector_pair(p, q)
    return float(np.mean(np.abs(np.sort(p) - np.sort(q))))


def wasserstein1_rows(p_row, q_row, *, allow_signed: bool = False) -> float:
    """W1 between two distributions over positions ``0..n-1``.

    Computed as the sum of absolute CDF differences.  ``allow_signed``
    admits rows with negative entries (equal total mass still required),
    for which the same sum is the Kantorovich-Rubinstein distance.
    """
    p, q = _vector_pair(p_row, q_row)
    if not allow_signed and (p.min() < -1e-9 or q.min() < -1e-9):
        raise ValueError("rows must be nonnegative distributions")
    if abs(p.sum() - q.sum()) > 1e-6:
        raise ValueError(f"rows carry different mass ({p.sum():.6g} vs {q.sum():.6g})")
    cdf_gap = np.cumsum(p - q)[:-1]
    return float(np.sum(np.abs(cdf_gap)))


def mean_wasserstein_matrices(a, b, *, allow_signed: bool = False) -> float:
    """Average row-wise W1 between two matrices (or two stacks of matrices)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim < 2:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    rows_a = a.reshape(-1, a.shape[-1])
    rows_b = b.reshape(-1, b.shape[-1])
    return float(np.mean([wasserstein1_rows(x, y, allow_signed=allow_signed)
                          for x, y in zip(rows_a, rows_b)]))


def rmse(p, q) -> float:
    p, q = _vector_pair(p, q)
    return float(np.sqrt(np.mean((p - q) ** 2)))


def pearson_r2(p, q) -> float:
    """Coefficient of determination of ``q`` against the reference ``p``.

    ``1 - sum((p - q)^2) / sum((p - mean(p))^2)``; not symmetric and can be
    negative.
    """
    p, q = _vector_pair(p, q)
    total = float(np.sum((p - p.mean()) ** 2))
    if total <= 1e-15:
        raise DegenerateError("reference predictions have zero variance")
    return 1.0 - float(np.sum((p - q) ** 2)) / total


def _batch(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = a[None, :, None], b[None, :, None]
    elif a.ndim == 2:
        a, b = a[None], b[None]
    elif a.ndim != 3:
        raise DimensionError(f"expected a vector, matrix or stack, got {a.ndim}-D")
    return a, b


def l2_rel(a, b) -> float:
    """Mean of ``||A1 - A2|| / (||A1|| + ||A2||)`` (Frobenius) over a batch.

    A 2-D input is a single pair; a 3-D input is a stack of pairs.
    """
    a, b = _batch(a, b)
    diff = np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1)
    denom = (np.linalg.norm(a.reshape(a.shape[0], -1), axis=1)
             + np.linalg.norm(b.reshape(b.shape[0], -1), axis=1))
    if np.any(denom == 0):
        raise DegenerateError("l2_rel undefined when both matrices are zero")
    return float(np.mean(diff / denom))


def l2_scaled(a, b) -> float:
    """Mean of ``||A1 - A2|| / n`` (Frobenius) over a batch, n = row count."""
    a, b = _batch(a, b)
    diff = np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1)
    return float(np.mean(diff / a.shape[1]))


@dataclass(frozen=True)
class MetricsReport:
    """Prediction-vector comparison; ``r2`` is None when the reference is constant."""

    wasserstein: float
    rmse: float
    r2: float | None
    l2_rel: float
    l2_scaled: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def compare_predictions(p, q) -> MetricsReport:
    p, q = _vector_pair(p, q)
    try:
        r2 = pearson_r2(p, q)
    except DegenerateError:
        r2 = None
    try:
        rel = l2_rel(p, q)
    except DegenerateError:
        rel = 0.0
    return MetricsReport(
        wasserstein=wasserstein1_predictions(p, q),
        rmse=rmse(p, q),
        r2=r2,
        l2_rel=rel,
        l2_scaled=l2_scaled(p, q),
        n_samples=int(p.size),
    )
