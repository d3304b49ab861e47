"""Exception types shared across the package."""


class RepconeError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(RepconeError):
    """File does not start with the expected magic/version bytes."""


class CorruptFileError(RepconeError):
    """File header parsed but the payload is truncated or inconsistent."""


class ValidationError(RepconeError):
    """Data violates a declared invariant (non-finite, zero-norm row, bad label...)."""


class MissingLabelsError(RepconeError):
    """Operation requires labels but the embedding set has none."""


class EmptySetError(RepconeError):
    """Operation requires at least one vector."""


class DimensionError(RepconeError):
    """Vector/matrix dimensions do not match."""


class ScenarioError(RepconeError):
    """Synthetic scenario spec violates its own constraints."""


class UndefinedCorrelationError(RepconeError):
    """Pearson correlation undefined (too few points or zero variance)."""


class NonFiniteGradientError(RepconeError):
    """An optimizer step received a NaN/Inf gradient."""


class CheckpointError(RepconeError):
    """Checkpoint file unreadable or structurally invalid."""
