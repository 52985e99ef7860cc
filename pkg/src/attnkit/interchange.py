"""Binary attention-extract container (ATNX1) and the shared data model.

File layout, little-endian throughout:

    magic   5 bytes  b"ATNX1"
    header  u32 n_layers, u32 n_heads, u32 n_segments
    per segment:
        u32 metadata length
        UTF-8 JSON metadata: {"id", "tokens", "special_flags", "word_index"}
        raw float32 attention, row-major [layer][head][from][to]

The JSON payload never contains the tensor itself; a 128-token segment of a
12x12 model is ~9.4 MB of floats, which would be ~100x larger as JSON text.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptFileError, FormatError, ValidationError

MAGIC = b"ATNX1"

# Per-token categories. CLS and SEP are delimiters that do not belong to any
# word; PERIOD_COMMA marks '.' and ',' tokens, which are ordinary words that
# the category statistics single out.
CLS = "CLS"
SEP = "SEP"
PERIOD_COMMA = "PERIOD_COMMA"
OTHER = "OTHER"
CATEGORIES = (CLS, SEP, PERIOD_COMMA, OTHER)
DELIMITERS = frozenset((CLS, SEP))

# word_index sentinel for delimiter tokens.
NO_WORD = -1

ROW_SUM_TOL = 1e-3


@dataclass(frozen=True, order=True)
class HeadId:
    """0-based (layer, head) address of one attention head."""

    layer: int
    head: int

    def display(self) -> str:
        """1-based "<layer>-<head>" form used in reports."""
        return f"{self.layer + 1}-{self.head + 1}"

    def flat(self, n_heads: int) -> int:
        return self.layer * n_heads + self.head

    @classmethod
    def from_flat(cls, index: int, n_heads: int) -> "HeadId":
        return cls(index // n_heads, index % n_heads)


@dataclass
class Segment:
    """One text segment with its full attention tensor.

    attention has shape (n_layers, n_heads, T, T), float32, and every row
    (fixed layer, head, from) is a probability distribution over tokens.
    word_index maps each token to its 0-based source word, NO_WORD for
    CLS/SEP delimiters.
    """

    id: str
    tokens: list[str]
    special_flags: list[str]
    word_index: np.ndarray
    attention: np.ndarray

    def __post_init__(self):
        self.word_index = np.asarray(self.word_index, dtype=np.int32)
        self.attention = np.asarray(self.attention, dtype=np.float32)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def n_words(self) -> int:
        wi = self.word_index
        return int(wi.max()) + 1 if (wi >= 0).any() else 0

    def words(self, marker: str = "##") -> list[str]:
        """Reconstruct word strings by joining continuation tokens."""
        out = [""] * self.n_words
        for tok, wi in zip(self.tokens, self.word_index):
            if wi < 0:
                continue
            out[wi] += tok[len(marker):] if tok.startswith(marker) else tok
        return out

    def validate(self, n_layers: int, n_heads: int) -> None:
        t = self.n_tokens
        if len(self.special_flags) != t or len(self.word_index) != t:
            raise ValidationError(
                f"segment {self.id!r}: metadata lengths disagree with token count {t}")
        for flag in self.special_flags:
            if flag not in CATEGORIES:
                raise ValidationError(f"segment {self.id!r}: unknown category {flag!r}")
        if self.attention.shape != (n_layers, n_heads, t, t):
            raise ValidationError(
                f"segment {self.id!r}: attention shape {self.attention.shape} != "
                f"({n_layers}, {n_heads}, {t}, {t})")
        self._validate_word_index()
        self._validate_rows()

    def _validate_word_index(self) -> None:
        prev = -1
        for pos, (flag, wi) in enumerate(zip(self.special_flags, self.word_index)):
            if flag in DELIMITERS:
                if wi != NO_WORD:
                    raise ValidationError(
                        f"segment {self.id!r}: delimiter token {pos} has word index {wi}")
                continue
            if wi < 0:
                raise ValidationError(
                    f"segment {self.id!r}: word token {pos} has no word index")
            if wi < prev or wi > prev + 1:
                raise ValidationError(
                    f"segment {self.id!r}: word_index jumps {prev} -> {wi} at token {pos}")
            prev = int(wi)

    def _validate_rows(self) -> None:
        if (self.attention < 0).any():
            layer, head, row, _ = np.argwhere(self.attention < 0)[0]
            raise ValidationError(
                f"segment {self.id!r}: negative attention at layer {layer} "
                f"head {head} row {row}")
        sums = self.attention.sum(axis=3, dtype=np.float64)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            layer, head, row = np.argwhere(bad)[0]
            raise ValidationError(
                f"segment {self.id!r}: attention row sums to "
                f"{sums[layer, head, row]:.6f} at layer {layer} head {head} row {row}")


@dataclass
class ExtractSet:
    """A collection of segments sharing the same model geometry."""

    n_layers: int
    n_heads: int
    segments: list[Segment] = field(default_factory=list)

    @property
    def n_total_heads(self) -> int:
        return self.n_layers * self.n_heads

    def head_ids(self) -> list[HeadId]:
        return [HeadId(l, h) for l in range(self.n_layers) for h in range(self.n_heads)]

    def validate(self) -> None:
        if self.n_layers <= 0 or self.n_heads <= 0:
            raise ValidationError("n_layers and n_heads must be positive")
        for seg in self.segments:
            seg.validate(self.n_layers, self.n_heads)


# Gradient-importance target categories; [CLS] targets are folded into OTHER.
GRAD_CATEGORIES = (SEP, PERIOD_COMMA, OTHER)


@dataclass
class GradientReport:
    """Mean masked-LM loss gradient magnitude per (layer, target category)."""

    n_layers: int
    values: np.ndarray  # (n_layers, 3), columns ordered as GRAD_CATEGORIES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def validate(self) -> None:
        if self.values.shape != (self.n_layers, len(GRAD_CATEGORIES)):
            raise ValidationError(
                f"gradient report shape {self.values.shape} != "
                f"({self.n_layers}, {len(GRAD_CATEGORIES)})")
        if (self.values < 0).any():
            raise ValidationError("gradient magnitudes must be nonnegative")


def _read(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptFileError(f"unexpected end of file while reading {what}")
    return buf


def load_extract(path) -> ExtractSet:
    """Load and fully validate an ATNX1 file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        n_layers, n_heads, n_segments = struct.unpack("<III", _read(fh, 12, "header"))
        segments = []
        for si in range(n_segments):
            (meta_len,) = struct.unpack("<I", _read(fh, 4, f"segment {si} metadata length"))
            try:
                meta = json.loads(_read(fh, meta_len, f"segment {si} metadata"))
                seg_id = meta["id"]
                tokens = list(meta["tokens"])
                flags = list(meta["special_flags"])
                word_index = meta["word_index"]
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptFileError(f"segment {si}: bad metadata ({exc})") from exc
            t = len(tokens)
            count = n_layers * n_heads * t * t
            payload = _read(fh, 4 * count, f"segment {si} attention payload")
            attention = np.frombuffer(payload, dtype="<f4").reshape(n_layers, n_heads, t, t)
            segments.append(Segment(seg_id, tokens, flags, word_index, attention.copy()))
        if fh.read(1):
            raise CorruptFileError("trailing bytes after last segment")
    out = ExtractSet(n_layers, n_heads, segments)
    out.validate()
    return out


def save_extract(extract: ExtractSet, path) -> None:
    """Write an ATNX1 file. Refuses sets that fail validation."""
    extract.validate()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", extract.n_layers, extract.n_heads,
                             len(extract.segments)))
        for seg in extract.segments:
            meta = json.dumps({
                "id": seg.id,
                "tokens": seg.tokens,
                "special_flags": seg.special_flags,
                "word_index": [int(w) for w in seg.word_index],
            }, ensure_ascii=False).encode("utf-8")
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            fh.write(np.ascontiguousarray(seg.attention, dtype="<f4").tobytes())


def load_gradient_report(path) -> GradientReport:
    """Read the JSON gradient report emitted by the extractor."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except ValueError as exc:
            raise CorruptFileError(f"{path}: not valid JSON ({exc})") from exc
    try:
        if list(data["categories"]) != list(GRAD_CATEGORIES):
            raise CorruptFileError(
                f"{path}: categories {data['categories']} != {list(GRAD_CATEGORIES)}")
        report = GradientReport(int(data["n_layers"]), np.array(data["values"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path}: bad gradient report ({exc})") from exc
    report.validate()
    return report


def save_gradient_report(report: GradientReport, path) -> None:
    report.validate()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "n_layers": report.n_layers,
            "categories": list(GRAD_CATEGORIES),
            "values": report.values.tolist(),
        }, fh, indent=2)
        fh.write("\n")
