"""
RMT Lab Custom Exceptions

Centralized exception hierarchy for consistent error handling across the lab.
Each exception carries a details dict for debugging and an exit code that the
command-line front door reports.
"""

from __future__ import annotations

from typing import Any

from src.constants import EXIT_IO, EXIT_NUMERICAL, EXIT_USAGE


class RmtLabError(Exception):
    """
    Base exception for all lab errors.

    All custom exceptions inherit from this class to enable catch-all
    handling in the CLI, which maps `exit_code` to the process status.
    """

    exit_code: int = EXIT_USAGE

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.details:
            return f"{self.message} | Details: {self.details}"
        return self.message


# ============================================================================
# Input / Usage Exceptions
# ============================================================================

class InvalidInputError(RmtLabError):
    """Raised when an argument is malformed (non-finite entries, bad ranges)."""

    def __init__(self, message: str = "Invalid input", **kwargs):
        super().__init__(message, **kwargs)


class ShapeError(InvalidInputError):
    """Raised when matrix dimensions violate p <= n or shapes disagree."""

    def __init__(self, message: str = "Invalid matrix shape", **kwargs):
        super().__init__(message, **kwargs)


class DomainError(InvalidInputError):
    """Raised when a parameter lies outside its mathematical domain."""

    def __init__(self, message: str = "Parameter outside its domain", **kwargs):
        super().__init__(message, **kwargs)


class UnsupportedOrderError(InvalidInputError):
    """Raised when a moment of total order above four is requested."""

    def __init__(self, message: str = "Moment order above 4 is not tabulated", **kwargs):
        super().__init__(message, **kwargs)


class UnknownEnsembleError(InvalidInputError):
    """
    Raised when an ensemble name cannot be resolved.

    Names are looked up in the registry, including parameterized forms such
    as `gauss-div:t=0.5:base=bernoulli`.
    """

    def __init__(self, name: str, **kwargs):
        self.name = name
        super().__init__(f"Unknown ensemble: {name!r}", **kwargs)


class EmptySampleError(InvalidInputError):
    """Raised when a statistic receives no values."""

    def __init__(self, message: str = "Sample is empty", **kwargs):
        super().__init__(message, **kwargs)


class UnsortedInputError(InvalidInputError):
    """Raised when values that must be ascending are not."""

    def __init__(self, message: str = "Input must be sorted ascending", **kwargs):
        super().__init__(message, **kwargs)


class IndexConstraintError(InvalidInputError):
    """Raised when eigenvalue or singular value indices are out of range."""

    def __init__(self, message: str = "Index constraint violated", **kwargs):
        super().__init__(message, **kwargs)


class HardEdgeError(DomainError):
    """
    Raised when soft-edge normalization is requested at p == n.

    The smallest singular value then sits at the hard edge zero and the
    centering and scale both degenerate.
    """

    def __init__(self, message: str = "Soft-edge normalization requires p < n", **kwargs):
        super().__init__(message, **kwargs)


class BranchCutError(DomainError):
    """Raised when the Stieltjes transform is evaluated on its cut [a, b]."""

    def __init__(self, message: str = "Point lies on the branch cut", **kwargs):
        super().__init__(message, **kwargs)


# ============================================================================
# Configuration Exceptions
# ============================================================================

class ConfigurationError(RmtLabError):
    """Raised when an experiment configuration is invalid or unreadable."""

    def __init__(self, message: str = "Invalid experiment configuration", **kwargs):
        super().__init__(message, **kwargs)


class ConfigHashMismatchError(ConfigurationError):
    """Raised when artifacts from different configurations are combined."""

    def __init__(self, expected: str, found: str, **kwargs):
        self.expected = expected
        self.found = found
        super().__init__(
            f"Config hash mismatch: expected {expected}, found {found}",
            **kwargs,
        )


# ============================================================================
# Numerical Exceptions
# ============================================================================

class NumericalError(RmtLabError):
    """Base exception for numerical failures"""

    exit_code = EXIT_NUMERICAL


class NonConvergenceError(NumericalError):
    """
    Raised when an iterative solver exhausts its iteration cap.

    The harness records such trials as failed instead of aborting the run.
    """

    def __init__(self, message: str = "Solver did not converge", **kwargs):
        super().__init__(message, **kwargs)


class PreconditionError(NumericalError):
    """Raised when an identity's hypothesis fails numerically (e.g. separation)."""

    def __init__(self, message: str = "Numerical precondition not met", **kwargs):
        super().__init__(message, **kwargs)


class DegenerateSpectrumError(PreconditionError):
    """Raised when singular values coincide where a simple spectrum is required."""

    def __init__(self, message: str = "Coinciding singular values", index: int | None = None, **kwargs):
        self.index = index
        if index is not None:
            message = f"{message} at index {index}"
        super().__init__(message, **kwargs)


class DegenerateDenominatorError(NumericalError):
    """Raised when a denominator falls below its tolerance."""

    def __init__(self, message: str = "Denominator is numerically zero", **kwargs):
        super().__init__(message, **kwargs)


class RejectionLimitError(NumericalError):
    """Raised when rejection sampling exceeds its round cap."""

    def __init__(self, message: str = "Rejection sampling exceeded its round cap", **kwargs):
        super().__init__(message, **kwargs)


# ============================================================================
# Storage Exceptions
# ============================================================================

class StorageError(RmtLabError):
    """Base exception for artifact persistence errors"""

    exit_code = EXIT_IO


class DataIntegrityError(StorageError):
    """
    Raised when two records share a key but differ in body.

    Identical keys must always carry bit-identical bodies; a difference
    means one of the artifacts is corrupt.
    """

    def __init__(self, message: str = "Conflicting records for the same key", **kwargs):
        super().__init__(message, **kwargs)
