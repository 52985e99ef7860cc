"""Writers for the portable attention container and gradient reports.

The binary container layout: a 5-byte magic string, three little-endian u32
counts (layers, heads, segments), then per segment a u32 metadata length, a
UTF-8 JSON object with id, tokens, special flags and word indices, and the
raw float32 attention tensor in row-major [layer][head][from][to] order.
Gradient reports are JSON with one row of category means per layer.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"ATNX1"

CLS = "CLS"
SEP = "SEP"
PERIOD_COMMA = "PERIOD_COMMA"
OTHER = "OTHER"
GRAD_CATEGORIES = (SEP, PERIOD_COMMA, OTHER)

NO_WORD = -1


@dataclass
class SegmentRecord:
    """One tokenized segment with its full attention tensor."""

    id: str
    tokens: list[str]
    special_flags: list[str]
    word_index: list[int]
    attention: np.ndarray  # [n_layers, n_heads, n_tokens, n_tokens] float32

    def validate(self, n_layers: int, n_heads: int) -> None:
        t = len(self.tokens)
        if not (len(self.special_flags) == len(self.word_index) == t):
            raise ValueError(f"segment {self.id}: token metadata lengths disagree")
        if self.attention.shape != (n_layers, n_heads, t, t):
            raise ValueError(f"segment {self.id}: attention shape "
                             f"{self.attention.shape} for {t} tokens")


def write_attention_file(records: list[SegmentRecord], n_layers: int,
                         n_heads: int, path) -> None:
    for record in records:
        record.validate(n_layers, n_heads)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", n_layers, n_heads, len(records)))
        for record in records:
            meta = json.dumps({
                "id": record.id,
                "tokens": record.tokens,
                "special_flags": record.special_flags,
                "word_index": [int(w) for w in record.word_index],
            }, ensure_ascii=False).encode("utf-8")
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            fh.write(np.ascontiguousarray(record.attention, dtype="<f4").tobytes())


def write_gradient_report(values: np.ndarray, path) -> None:
    """Write per-layer mean gradient magnitudes, one row per layer,
    one column per target category."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(GRAD_CATEGORIES):
        raise ValueError(f"gradient values shaped {values.shape}, "
                         f"want [n_layers, {len(GRAD_CATEGORIES)}]")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "n_layers": values.shape[0],
            "categories": list(GRAD_CATEGORIES),
            "values": values.tolist(),
        }, fh, indent=2)
        fh.write("\n")


def write_per_head_gradients(values: np.ndarray, path) -> None:
    """Raw per-head dump: [n_layers, n_heads, n_categories] means."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[2] != len(GRAD_CATEGORIES):
        raise ValueError(f"per-head gradient values shaped {values.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "n_layers": values.shape[0],
            "n_heads": values.shape[1],
            "categories": list(GRAD_CATEGORIES),
            "values": values.tolist(),
        }, fh, indent=2)
        fh.write("\n")
