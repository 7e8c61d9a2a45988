"""Efficient attention: identifiable, prediction-preserving projections of attention."""

__version__ = "0.1.0"

from .adversarial import AdversarialSample, complement_attention, generate_adversarial
from .core import (
    Decomposition,
    IdentifiabilityVerdict,
    Violation,
    decompose,
    effective_attention_brunner,
    efficient_attention,
    identifiability,
    prediction_preserved,
    validate_distribution,
)
from .errors import (
    DegenerateError,
    DimensionError,
    EfficientAttentionError,
    IdentifiableError,
    NegativeWeightError,
    NegativeWeightWarning,
    ValidationError,
)
from .linalg import (
    DEFAULT_TOLERANCE,
    OrthonormalBasis,
    Tolerance,
    augment_ones,
    column_space_basis,
    null_space_basis,
    project_onto,
    project_rows,
    rank,
)
