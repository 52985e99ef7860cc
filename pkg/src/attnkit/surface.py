"""Surface-level attention statistics over a whole extract.

All statistics are token-weighted means pooled over every segment: each
source token counts once, regardless of which segment it came from. Shares
land in [0, 1]; entropies are in nats.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .interchange import CATEGORIES, CLS, SEP, ExtractSet, GradientReport


def _category_mask(segment, category: str) -> np.ndarray:
    return np.array([flag == category for flag in segment.special_flags])


def offset_stats(extract: ExtractSet, offset: int) -> np.ndarray:
    """Per-head mean attention share at a fixed relative position.

    Source tokens whose offset neighbor falls outside the segment are left
    out of the denominator rather than contributing zero; short segments
    would otherwise systematically drag the share down.
    """
    if not extract.segments:
        raise ValueError("empty extract set")
    total = np.zeros((extract.n_layers, extract.n_heads))
    count = 0
    for seg in extract.segments:
        t = seg.n_tokens
        src = np.arange(t)
        valid = (src + offset >= 0) & (src + offset < t)
        if not valid.any():
            continue
        src = src[valid]
        total += seg.attention[:, :, src, src + offset].sum(axis=2, dtype=np.float64)
        count += len(src)
    if count == 0:
        raise ValueError(f"no source token has a neighbor at offset {offset}")
    return total / count


def category_stats(extract: ExtractSet, category: str) -> np.ndarray:
    """Per-head mean attention mass sent to tokens of one category."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    if not extract.segments:
        raise ValueError("empty extract set")
    total = np.zeros((extract.n_layers, extract.n_heads))
    count = 0
    for seg in extract.segments:
        mask = _category_mask(seg, category)
        if mask.any():
            total += seg.attention[:, :, :, mask].sum(axis=(2, 3), dtype=np.float64)
        count += seg.n_tokens
    return total / count


def sep_breakdown(extract: ExtractSet) -> tuple[np.ndarray, np.ndarray]:
    """Mass to [SEP] split by source: (from [SEP] tokens, from all others)."""
    if not extract.segments:
        raise ValueError("empty extract set")
    shape = (extract.n_layers, extract.n_heads)
    totals = [np.zeros(shape), np.zeros(shape)]
    counts = [0, 0]
    for seg in extract.segments:
        to_sep = _category_mask(seg, SEP)
        if not to_sep.any():
            counts[1] += seg.n_tokens
            continue
        mass = seg.attention[:, :, :, to_sep].sum(axis=3, dtype=np.float64)  # [L,H,T]
        for which, rows in ((0, to_sep), (1, ~to_sep)):
            if rows.any():
                totals[which] += mass[:, :, rows].sum(axis=2)
                counts[which] += int(rows.sum())
    return tuple(t / c if c else np.zeros(shape) for t, c in zip(totals, counts))


def row_entropy(rows: np.ndarray) -> np.ndarray:
    """Entropy in nats of each attention row, with 0 * ln 0 = 0."""
    p = rows.astype(np.float64)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def head_entropy(extract: ExtractSet) -> np.ndarray:
    """Per-head mean entropy over every attention row in the extract."""
    if not extract.segments:
        raise ValueError("empty extract set")
    total = np.zeros((extract.n_layers, extract.n_heads))
    count = 0
    for seg in extract.segments:
        total += row_entropy(seg.attention).sum(axis=2)
        count += seg.n_tokens
    return total / count


def cls_entropy(extract: ExtractSet) -> np.ndarray:
    """Per-layer mean entropy of [CLS] source rows, averaged over heads."""
    if not extract.segments:
        raise ValueError("empty extract set")
    total = np.zeros(extract.n_layers)
    count = 0
    for seg in extract.segments:
        mask = _category_mask(seg, CLS)
        if not mask.any():
            continue
        ent = row_entropy(seg.attention[:, :, mask, :])  # [L,H,n_cls]
        total += ent.sum(axis=(1, 2))
        count += extract.n_heads * int(mask.sum())
    if count == 0:
        raise ValueError("extract has no [CLS] tokens")
    return total / count


def aggregate_gradients(report: GradientReport,
                        expected_layers: int | None = None
                        ) -> list[tuple[int, float, float, float]]:
    """Per-layer gradient-importance curves as CSV-ready rows.

    Row layout: (layer, sep, period_comma, other), matching GRAD_CATEGORIES.
    """
    report.validate()
    if expected_layers is not None and report.n_layers != expected_layers:
        raise ValidationError(
            f"gradient report has {report.n_layers} layers, expected {expected_layers}")
    return [(layer, *map(float, row)) for layer, row in enumerate(report.values)]
