"""Attention and gradient extraction from transformer checkpoints.

Runs a pretrained (or partially re-initialized) model over a text file and
writes the attention tensors, wordpiece-to-word alignments, and gradient
importance summaries as portable files that downstream analysis tools load.
"""

from .formats import (CLS, GRAD_CATEGORIES, MAGIC, NO_WORD, OTHER,
                      PERIOD_COMMA, SEP, SegmentRecord, write_attention_file,
                      write_gradient_report, write_per_head_gradients)
from .job import ExtractError, ExtractJob
from .runner import (ExtractResult, GradResult, extract_attention,
                     grad_importance, load_model, load_tokenizer,
                     read_segments)

__version__ = "0.1.0"

__all__ = [
    "CLS", "SEP", "PERIOD_COMMA", "OTHER", "GRAD_CATEGORIES", "MAGIC",
    "NO_WORD", "SegmentRecord", "write_attention_file",
    "write_gradient_report", "write_per_head_gradients", "ExtractError",
    "ExtractJob", "ExtractResult", "GradResult", "extract_attention",
    "grad_importance", "load_model", "load_tokenizer", "read_segments",
    "__version__",
]
