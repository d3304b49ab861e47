"""Error taxonomy for the extraction pipeline."""


class ConetextError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(ConetextError):
    """A parameter violates a documented invariant."""


class InputFormatError(ConetextError):
    """An input line does not parse; the message carries its line number."""


class ModelLoadError(ConetextError):
    """The requested model or tokenizer could not be loaded."""
