"""Efficient attention, the effective-attention baseline, and identifiability.

Attention matrices ``a`` are ``d_s x d_s`` row-stochastic arrays; hidden
states ``t`` are ``d_s x d`` arrays with ``T = E W_V H``.  Two attention
matrices are prediction-equivalent when ``a1 @ t == a2 @ t``.  Efficient
attention projects each row of ``a`` onto Im([T,1]), which removes exactly
the component that cannot influence ``a @ t`` while keeping rows summing
to one.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .errors import DimensionError, NegativeWeightError, NegativeWeightWarning, ValidationError
from .linalg import (
    DEFAULT_TOLERANCE,
    Tolerance,
    as_matrix,
    augment_ones,
    column_space_basis,
    project_rows,
    rank,
)

__all__ = [
    "Decomposition",
    "IdentifiabilityVerdict",
    "Violation",
    "efficient_attention",
    "effective_attention_brunner",
    "decompose",
    "identifiability",
    "validate_distribution",
    "prediction_preserved",
]

OnNegative = Literal["raise", "warn", "ignore"]


def _pair(a, t) -> tuple[np.ndarray, np.ndarray]:
    a = as_matrix(a, "A")
    t = as_matrix(t, "T")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"A must be square, got {a.shape}")
    if a.shape[0] != t.shape[0]:
        raise DimensionError(f"A has {a.shape[0]} rows but T has {t.shape[0]}")
    return a, t


def _clamp_small_negatives(out: np.ndarray, tol: Tolerance) -> np.ndarray:
    small = (out < 0) & (out >= -tol.check_abs)
    rows = np.flatnonzero(small.any(axis=1))
    if rows.size == 0:
        return out
    out = out.copy()
    for i in rows:
        total = out[i].sum()
        out[i, small[i]] = 0.0
        out[i] *= total / out[i].sum()
    return out


def efficient_attention(a, t, tol: Tolerance = DEFAULT_TOLERANCE, *,
                        check: bool = True, clamp: bool = True,
                        on_negative: OnNegative = "warn") -> np.ndarray:
    """Project each row of ``a`` onto Im([T,1]) = Ker([T,1]')^perp.

    When [T,1] has full row rank the projection is the identity and ``a``
    is returned unchanged (bit for bit).

    With ``check`` set, prediction preservation (``A_eff T = A T``) and
    unit row sums are verified and a :class:`ValidationError` is raised on
    failure.  Entries in ``[-tol.check_abs, 0)`` are clamped to zero and
    their row rescaled when ``clamp`` is set.  Entries below
    ``-tol.check_abs`` do occur for peaked rows (the projection of a
    positive vector need not be positive); ``on_negative`` selects whether
    they raise, warn, or pass silently.
    """
    a, t = _pair(a, t)
    basis = column_space_basis(augment_ones(t), tol)
    if len(basis) == a.shape[0]:
        out = a.copy()
    else:
        out = project_rows(a, basis)
    if clamp:
        out = _clamp_small_negatives(out, tol)
    if check:
        _check_projection(a, out, t, tol)
        a_sums = a.sum(axis=1)
        sum_err = np.max(np.abs(out.sum(axis=1) - a_sums))
        if sum_err > tol.check_abs:
            raise ValidationError(f"row sums changed by {sum_err:.3e}")
        if np.max(np.abs(a_sums - 1.0)) <= tol.check_abs:
            lowest = float(out.min())
            if lowest < -tol.check_abs and on_negative != "ignore":
                msg = f"efficient attention has a negative entry {lowest:.3e}"
                if on_negative == "raise":
                    raise NegativeWeightError(msg)
                warnings.warn(msg, NegativeWeightWarning, stacklevel=2)
    return out


def _check_projection(a, out, t, tol: Tolerance) -> None:
    err = np.max(np.abs(out @ t - a @ t))
    scale = max(1.0, float(np.abs(t).max()))
    if err > tol.check_abs * scale:
        raise ValidationError(f"projection changed A.T by {err:.3e}")


def effective_attention_brunner(a, t, tol: Tolerance = DEFAULT_TOLERANCE, *,
                                check: bool = True) -> np.ndarray:
    """Baseline: project rows of ``a`` onto Im(T), without the ones column.

    Preserves ``A T`` but not row sums or signs.
    """
    a, t = _pair(a, t)
    basis = column_space_basis(t, tol)
    if len(basis) == a.shape[0]:
        out = a.copy()
    else:
        out = project_rows(a, basis)
    if check:
        _check_projection(a, out, t, tol)
    return out


@dataclass(frozen=True)
class Decomposition:
    """``A = a_perp + a_sharp`` with rows of ``a_sharp`` in Ker([T,1]')."""

    a_perp: np.ndarray
    a_sharp: np.ndarray

    @property
    def original(self) -> np.ndarray:
        return self.a_perp + self.a_sharp


def decompose(a, t, tol: Tolerance = DEFAULT_TOLERANCE) -> Decomposition:
    a, t = _pair(a, t)
    # unclamped so the two parts stay exactly orthogonal
    a_perp = efficient_attention(a, t, tol, clamp=False, on_negative="ignore")
    a_sharp = a - a_perp
    kernel_err = np.max(np.abs(a_sharp @ augment_ones(t)))
    if kernel_err > tol.check_abs * max(1.0, float(np.abs(t).max())):
        raise ValidationError(f"A_sharp leaves the kernel by {kernel_err:.3e}")
    return Decomposition(a_perp=a_perp, a_sharp=a_sharp)


@dataclass(frozen=True)
class IdentifiabilityVerdict:
    d_s: int
    d_v: int
    rank_t: int
    rank_t1: int
    kernel_dim: int
    raw_identifiable: bool
    stochastic_identifiable: bool
    dimension_sufficient_nonident: bool

    def to_dict(self) -> dict:
        return asdict(self)


def identifiability(t, d_v: int | None = None,
                    tol: Tolerance = DEFAULT_TOLERANCE) -> IdentifiabilityVerdict:
    """Ranks of T and [T,1] and the identifiability predicates they imply.

    ``d_v`` defaults to the column count of ``t``; both bound rank(T), so
    ``d_s > d_v + 1`` is sufficient for non-identifiability either way.
    """
    t = as_matrix(t, "T")
    d_s = t.shape[0]
    if d_v is None:
        d_v = t.shape[1]
    if d_v < 1:
        raise ValueError(f"d_v must be positive, got {d_v}")
    rank_t = rank(t, tol)
    rank_t1 = rank(augment_ones(t), tol)
    kernel_dim = d_s - rank_t1
    return IdentifiabilityVerdict(
        d_s=d_s,
        d_v=int(d_v),
        rank_t=rank_t,
        rank_t1=rank_t1,
        kernel_dim=kernel_dim,
        raw_identifiable=rank_t == d_s,
        stochastic_identifiable=kernel_dim == 0,
        dimension_sufficient_nonident=d_s > d_v + 1,
    )


@dataclass(frozen=True)
class Violation:
    row: int
    kind: Literal["negative", "row_sum", "non_finite"]
    magnitude: float


def validate_distribution(m, tol: Tolerance = DEFAULT_TOLERANCE) -> list[Violation]:
    """List every row that is not a probability distribution.

    One ``negative`` record per row (magnitude of its most negative entry)
    and one ``row_sum`` record per row (absolute deviation from 1).  Never
    raises.
    """
    try:
        arr = np.atleast_2d(np.asarray(m, dtype=float))
    except (TypeError, ValueError):
        return [Violation(-1, "non_finite", float("nan"))]
    out = []
    for i, row in enumerate(arr):
        if not np.all(np.isfinite(row)):
            out.append(Violation(i, "non_finite", float("nan")))
            continue
        low = float(row.min()) if row.size else 0.0
        if low < -tol.check_abs:
            out.append(Violation(i, "negative", -low))
        dev = abs(float(row.sum()) - 1.0)
        if dev > tol.check_abs:
            out.append(Violation(i, "row_sum", dev))
    return out


def prediction_preserved(a, b, t, tol: Tolerance = DEFAULT_TOLERANCE) -> bool:
    """True when ``a @ t`` and ``b @ t`` agree within ``tol.check_abs``."""
    a, t = _pair(a, t)
    b = as_matrix(b, "B")
    if b.shape != a.shape:
        raise DimensionError(f"A has shape {a.shape} but B has {b.shape}")
    return bool(np.max(np.abs(a @ t - b @ t)) <= tol.check_abs)
