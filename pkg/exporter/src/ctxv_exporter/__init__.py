"""Export per-word contextual vectors from a transformer checkpoint.

The output is a CTXV teacher file: one record per corpus sentence, one
float32 row per whitespace word, subword pieces mean-pooled so the row
count always matches the pretokenized corpus line.
"""

from ctxv_exporter.alignment import AlignmentError, AlignmentMap, align_words
from ctxv_exporter.export import (
    CTXV_MAGIC,
    CTXV_VERSION,
    EXPORTER_VERSION,
    ExportSummary,
    export,
)

__version__ = EXPORTER_VERSION

__all__ = [
    "AlignmentError",
    "AlignmentMap",
    "align_words",
    "CTXV_MAGIC",
    "CTXV_VERSION",
    "ExportSummary",
    "export",
    "__version__",
]
