"""Pool pretrained-transformer representations into labeled embedding files."""

from .errors import ConetextError, InputFormatError, ModelLoadError, ValidationError
from .extract import ExtractionSpec, extract, read_labeled_lines
from .writer import write_embv1

__all__ = [
    "ConetextError",
    "ExtractionSpec",
    "InputFormatError",
    "ModelLoadError",
    "ValidationError",
    "extract",
    "read_labeled_lines",
    "write_embv1",
]
