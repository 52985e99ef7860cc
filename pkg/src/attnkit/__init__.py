"""Model-agnostic analysis toolkit for serialized transformer attention maps."""

__version__ = "0.1.0"

from .errors import (AlignmentError, CorruptFileError, FormatError, ParseError,
                     ToolkitError, ValidationError)
from .interchange import (ExtractSet, GradientReport, HeadId, Segment,
                          load_extract, load_gradient_report, save_extract,
                          save_gradient_report)
from .wordmap import WordAttentionMatrix, to_word_attention, word_attention_tensor

__all__ = [
    "__version__",
    "AlignmentError", "CorruptFileError", "FormatError", "ParseError",
    "ToolkitError", "ValidationError",
    "ExtractSet", "GradientReport", "HeadId", "Segment",
    "load_extract", "load_gradient_report", "save_extract", "save_gradient_report",
    "WordAttentionMatrix", "to_word_attention", "word_attention_tensor",
]
