"""Exception hierarchy shared across the package."""


class EfficientAttentionError(Exception):
    """Base class for all package errors."""


class DimensionError(EfficientAttentionError, ValueError):
    """Shapes do not conform, or an input is empty or non-finite."""


class IdentifiableError(EfficientAttentionError):
    """Raised when Ker([T,1]') is trivial, so no adversarial attention exists."""


class DegenerateError(EfficientAttentionError, ArithmeticError):
    """A quantity needed by the computation vanishes (zero variance, zero step)."""


class ValidationError(EfficientAttentionError, AssertionError):
    """A guaranteed post-condition failed beyond tolerance."""


class NegativeWeightError(ValidationError):
    """An efficient-attention entry fell below ``-tol.check_abs``."""


class NegativeWeightWarning(UserWarning):
    """Emitted instead of :class:`NegativeWeightError` when negatives are tolerated."""
