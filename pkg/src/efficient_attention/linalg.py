"""Dense linear-algebra kernels.

Everything here works on plain ``numpy`` float64 arrays.  Bases are
computed with a column-pivoted modified Gram-Schmidt that re-orthogonalizes
each accepted vector once, which is deterministic and accurate enough for
the matrix sizes attention heads produce (a few hundred rows at most).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError

__all__ = [
    "Tolerance",
    "DEFAULT_TOLERANCE",
    "TOLERANCE_ENV_VAR",
    "OrthonormalBasis",
    "as_matrix",
    "augment_ones",
    "column_space_basis",
    "rank",
    "null_space_basis",
    "project_onto",
    "project_rows",
]

TOLERANCE_ENV_VAR = "EFFICIENT_ATTENTION_TOL"


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds.

    ``rank_rel`` decides rank: a residual column counts as independent when
    its norm exceeds ``rank_rel`` times the largest initial column norm.
    ``check_abs`` is the absolute slack for every post-condition check.
    """

    rank_rel: float = 1e-10
    check_abs: float = 1e-9

    def __post_init__(self):
        for name in ("rank_rel", "check_abs"):
            value = getattr(self, name)
            if not (0.0 < value < 1e-2):
                raise ValueError(f"{name} must lie in (0, 1e-2), got {value!r}")

    @classmethod
    def from_string(cls, text: str, base: "Tolerance | None" = None) -> "Tolerance":
        """Parse ``"rank_rel=1e-12,check_abs=1e-8"``.

        A bare number is read as ``check_abs``.
        """
        base = base or cls()
        text = text.strip()
        if not text:
            return base
        updates = {}
        for part in text.split(","):
            part = part.strip()
            if "=" not in part:
                updates["check_abs"] = float(part)
                continue
            key, value = (s.strip() for s in part.split("=", 1))
            if key not in ("rank_rel", "check_abs"):
                raise ValueError(f"unknown tolerance field {key!r}")
            updates[key] = float(value)
        return replace(base, **updates)

    @classmethod
    def from_env(cls) -> "Tolerance":
        return cls.from_string(os.environ.get(TOLERANCE_ENV_VAR, ""))

    def to_dict(self) -> dict:
        return {"rank_rel": self.rank_rel, "check_abs": self.check_abs}


DEFAULT_TOLERANCE = Tolerance()


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal vectors of R^ambient_dim, stored as the rows of ``vectors``."""

    ambient_dim: int
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float).reshape(-1, self.ambient_dim)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __iter__(self):
        return iter(self.vectors)

    @property
    def matrix(self) -> np.ndarray:
        """Basis vectors as columns, shape ``(ambient_dim, count)``."""
        return self.vectors.T

    def projector(self) -> np.ndarray:
        """The orthogonal projector ``U U'`` onto the span."""
        return self.vectors.T @ self.vectors

    def check(self, norm_tol: float = 1e-12, ortho_tol: float = 1e-10) -> None:
        """Raise ``AssertionError`` unless the vectors are orthonormal."""
        if len(self) > self.ambient_dim:
            raise AssertionError("more basis vectors than the ambient dimension")
        if len(self) == 0:
            return
        gram = self.vectors @ self.vectors.T
        norm_err = np.max(np.abs(np.diag(gram) - 1.0))
        if norm_err > norm_tol:
            raise AssertionError(f"basis vector norm off by {norm_err:.3e}")
        off = gram - np.diag(np.diag(gram))
        ortho_err = np.max(np.abs(off)) if len(self) > 1 else 0.0
        if ortho_err > ortho_tol:
            raise AssertionError(f"basis vectors not orthogonal ({ortho_err:.3e})")


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and return ``m`` as a finite, non-empty 2-D float64 array."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"{name} is empty (shape {arr.shape})")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf")
    return arr


def augment_ones(t) -> np.ndarray:
    """Return ``[T, 1]``: ``t`` with a trailing column of ones."""
    t = as_matrix(t, "T")
    return np.hstack([t, np.ones((t.shape[0], 1))])


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    # first non-negligible coordinate positive, for bit-reproducible output
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def _gram_schmidt(columns: np.ndarray, threshold: float,
                  basis: list[np.ndarray]) -> list[np.ndarray]:
    """Extend ``basis`` with the pivoted MGS of ``columns``.

    At each step the remaining column with the largest residual norm is
    taken (lowest index wins ties) and accepted if that norm exceeds
    ``threshold``.  Accepted vectors get one classical re-orthogonalization
    pass against the whole basis before normalization.
    """
    work = columns.copy()
    remaining = list(range(work.shape[1]))
    # residuals start orthogonal to anything already in the basis
    for q in basis:
        work -= np.outer(q, q @ work)
    while remaining:
        norms = np.linalg.norm(work[:, remaining], axis=0)
        pick = int(np.argmax(norms))
        if norms[pick] <= threshold:
            break
        j = remaining.pop(pick)
        v = work[:, j].copy()
        if basis:
            q_mat = np.array(basis)
            v -= q_mat.T @ (q_mat @ v)
        v /= np.linalg.norm(v)
        basis.append(v)
        if remaining:
            rest = work[:, remaining]
            work[:, remaining] = rest - np.outer(v, v @ rest)
    return basis


def column_space_basis(m, tol: Tolerance = DEFAULT_TOLERANCE) -> OrthonormalBasis:
    """Orthonormal basis of Im(m), one vector per numerically independent column."""
    m = as_matrix(m)
    col_norms = np.linalg.norm(m, axis=0)
    max_norm = float(col_norms.max())
    if max_norm == 0.0:
        return OrthonormalBasis(m.shape[0], np.empty((0, m.shape[0])))
    vectors = _gram_schmidt(m, tol.rank_rel * max_norm, [])
    vectors = [_canonical_sign(v) for v in vectors]
    basis = OrthonormalBasis(m.shape[0], np.array(vectors))
    basis.check()
    return basis


def rank(m, tol: Tolerance = DEFAULT_TOLERANCE) -> int:
    return len(column_space_basis(m, tol))


def null_space_basis(m, tol: Tolerance = DEFAULT_TOLERANCE) -> OrthonormalBasis:
    """Orthonormal basis of Ker(m') = Im(m)^perp inside R^rows(m).

    The column-space basis is completed with pivoted Gram-Schmidt over the
    standard basis vectors; the completion vectors are returned.
    """
    m = as_matrix(m)
    n = m.shape[0]
    col = column_space_basis(m, tol)
    count = n - len(col)
    basis = [np.array(v) for v in col.vectors]
    # the best remaining standard vector always has residual >= sqrt(count/n)
    _gram_schmidt(np.eye(n), 0.5 / np.sqrt(n), basis)
    extra = [_canonical_sign(v) for v in basis[len(col):]]
    if len(extra) != count:
        raise ArithmeticError("failed to complete the basis of R^n")
    kernel = OrthonormalBasis(n, np.array(extra).reshape(count, n))
    kernel.check()
    if count:
        residual = np.max(np.abs(m.T @ kernel.matrix))
        if residual > tol.check_abs * max(1.0, float(np.abs(m).max())):
            raise ArithmeticError(f"null-space vectors leave residual {residual:.3e}")
    return kernel


def project_onto(v, basis: OrthonormalBasis) -> np.ndarray:
    """Orthogonal projection of vector ``v`` onto the span of ``basis``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != basis.ambient_dim:
        raise DimensionError(
            f"vector of length {v.shape} does not match ambient dim {basis.ambient_dim}")
    if len(basis) == 0:
        return np.zeros_like(v)
    u = basis.vectors
    return u.T @ (u @ v)


def project_rows(a, basis: OrthonormalBasis) -> np.ndarray:
    """Project every row of ``a`` onto the span of ``basis``."""
    a = as_matrix(a)
    if a.shape[1] != basis.ambient_dim:
        raise DimensionError(
            f"rows of length {a.shape[1]} do not match ambient dim {basis.ambient_dim}")
    if len(basis) == 0:
        return np.zeros_like(a)
    u = basis.vectors
    return (a @ u.T) @ u
