"""Adversarial attention by perturbing along Ker([T,1]').

Adding ``B`` whose rows lie in Ker([T,1]') leaves both ``A T`` and the row
sums untouched, so ``A + B`` is a different attention matrix with the same
prediction whenever it stays nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import _pair, validate_distribution
from .errors import DegenerateError, IdentifiableError
from .linalg import DEFAULT_TOLERANCE, Tolerance, augment_ones, null_space_basis

__all__ = ["AdversarialSample", "generate_adversarial", "complement_attention",
           "MIN_STEP", "MIN_DISTINCT"]

MIN_STEP = 1e-8
MIN_DISTINCT = 1e-4
STEP_FRACTION = 0.5


@dataclass(frozen=True)
class AdversarialSample:
    """``adversarial = original + lambda_used * kernel_direction``.

    ``row_lambdas`` are the per-row steps actually taken along unit kernel
    directions; ``kernel_direction`` rows are those unit directions scaled by
    ``row_lambdas / lambda_used``, so they still lie in Ker([T,1]').
    """

    original: np.ndarray = field(repr=False)
    adversarial: np.ndarray = field(repr=False)
    lambda_used: float
    kernel_direction: np.ndarray = field(repr=False)
    row_lambdas: np.ndarray = field(repr=False)

    @property
    def max_change(self) -> float:
        return float(np.max(np.abs(self.adversarial - self.original)))


def _max_steps(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Largest ``lam`` per row with ``a + lam * b >= 0``."""
    neg = b < 0
    ratios = np.full(a.shape, np.inf)
    ratios[neg] = a[neg] / -b[neg]
    return ratios.min(axis=1)


def generate_adversarial(a, t, seed: int, tol: Tolerance = DEFAULT_TOLERANCE, *,
                         per_row: bool = True) -> AdversarialSample:
    """Draw a seeded kernel perturbation of ``a`` that keeps ``a @ t`` fixed.

    Each row gets an independent random unit combination of the
    Ker([T,1]') basis.  The shared step ``lambda_used`` is half the smallest
    per-row step that would reach the simplex boundary.  With ``per_row``
    (the default) every row instead travels half of its own boundary step,
    which keeps a single tight row from pinning the whole matrix in place;
    ``per_row=False`` applies the shared step to all rows.
    """
    a, t = _pair(a, t)
    bad = validate_distribution(a, tol)
    if bad:
        raise ValueError(f"A is not row-stochastic: {bad[0]}")
    kernel = null_space_basis(augment_ones(t), tol)
    if len(kernel) == 0:
        raise IdentifiableError("no adversarial exists: attention identifiable")

    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((a.shape[0], len(kernel)))
    directions = coeffs @ kernel.vectors
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    lam_max = _max_steps(a, directions)
    shared = STEP_FRACTION * float(lam_max.min())
    if lam_max.min() < MIN_STEP:
        raise DegenerateError(
            f"step bound {lam_max.min():.3e} < {MIN_STEP}: A is too close to the "
            "simplex boundary along the drawn kernel direction")
    if per_row:
        row_lambdas = STEP_FRACTION * lam_max
    else:
        row_lambdas = np.full(a.shape[0], shared)
    kernel_direction = directions * (row_lambdas / shared)[:, None]
    adversarial = a + row_lambdas[:, None] * directions

    sample = AdversarialSample(
        original=a,
        adversarial=adversarial,
        lambda_used=shared,
        kernel_direction=kernel_direction,
        row_lambdas=row_lambdas,
    )
    if sample.max_change < MIN_DISTINCT:
        raise DegenerateError(
            f"adversarial differs from A by only {sample.max_change:.3e}")
    return sample


def complement_attention(a) -> np.ndarray:
    """Entrywise ``1 - a``.

    Rows of the result sum to ``d_s - 1``; it is deliberately not a
    distribution.
    """
    return 1.0 - np.asarray(a, dtype=float)
