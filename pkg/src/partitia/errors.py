"""Exception types raised across the package."""

from __future__ import annotations


class PartitiaError(Exception):
    """Base class for model-level errors (CLI exit code 3)."""


class InvalidWeightsError(PartitiaError, ValueError):
    """A weight sequence has a negative, non-finite or out-of-table entry."""


class InvalidTableError(PartitiaError, ValueError):
    """An h-table violates h_0 = 1 or non-negativity."""


class MassMismatchError(PartitiaError, ValueError):
    """A partition or state has the wrong total mass for the measure."""


class UnsampleableMassError(PartitiaError, ValueError):
    """The normalization at the requested mass is zero."""


class DivergenceError(PartitiaError, ArithmeticError):
    """A series or integral required by the computation diverges."""


class DomainError(PartitiaError, ValueError):
    """An argument lies outside the domain of the operation."""


class IterationCapError(PartitiaError, RuntimeError):
    """A rejection loop or iterative solver exceeded its budget."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StateSpaceTooLargeError(PartitiaError, ValueError):
    """An enumeration was requested over a state space above the cap."""


class ConfigError(Exception):
    """Configuration failed schema validation (CLI exit code 2)."""
