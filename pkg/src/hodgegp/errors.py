"""Exception types used across the package."""


class HodgeGPError(Exception):
    """Base class for all package errors."""


class StructuralError(HodgeGPError, ValueError):
    """A simplicial complex violates a structural requirement
    (dangling reference, duplicate simplex, missing boundary edge, ...)."""


class UsageError(HodgeGPError, ValueError):
    """An operation was called with arguments outside its contract."""


class IngestionError(HodgeGPError, ValueError):
    """A data file could not be parsed or is inconsistent with the complex."""


class GenerationError(HodgeGPError, RuntimeError):
    """A synthetic-data generator could not produce a valid dataset."""


class NumericalError(HodgeGPError, RuntimeError):
    """A numerical routine failed (non-convergence, factorization failure,
    non-PSD kernel, NaN loss)."""


class ClassificationError(NumericalError):
    """An eigenvector could not be assigned to a single Hodge subspace."""
