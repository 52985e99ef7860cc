"""Shared builders for handmade segments and extracts."""

import numpy as np

from attnkit.interchange import (CLS, ExtractSet, NO_WORD, OTHER, PERIOD_COMMA,
                                 SEP, Segment)


def flag_for(word: str) -> str:
    return PERIOD_COMMA if word in (".", ",") else OTHER


def attention_for(tokens: list[str], n_layers: int, n_heads: int, rng=None) -> np.ndarray:
    """Random row-stochastic [L, H, T, T] float32 tensor."""
    rng = rng or np.random.default_rng(0)
    t = len(tokens)
    a = rng.random((n_layers, n_heads, t, t)) + 1e-6
    a /= a.sum(axis=-1, keepdims=True)
    return a.astype("<f4")


def make_segment(pieces: list[tuple[str, int]], n_layers: int = 1, n_heads: int = 1,
                 rng=None, seg_id: str = "s0", attention=None) -> Segment:
    """Segment from (token, word_index) pairs, delimiters added around them."""
    tokens = ["[CLS]"] + [p for p, _ in pieces] + ["[SEP]"]
    word_index = np.array([NO_WORD] + [w for _, w in pieces] + [NO_WORD],
                          dtype=np.int32)
    flags = [CLS] + [flag_for(p) for p, _ in pieces] + [SEP]
    if attention is None:
        attention = attention_for(tokens, n_layers, n_heads, rng)
    return Segment(seg_id, tokens, flags, word_index, attention)


def plain_segment(words: list[str], n_layers: int = 1, n_heads: int = 1,
                  rng=None, seg_id: str = "s0", attention=None) -> Segment:
    """One token per word, no subword splits."""
    return make_segment([(w, i) for i, w in enumerate(words)],
                        n_layers, n_heads, rng, seg_id, attention)


def random_split_segment(rng, n_layers: int = 1, n_heads: int = 1,
                         seg_id: str = "s0") -> Segment:
    """Random words, some split into ## pieces."""
    n_words = int(rng.integers(2, 9))
    pieces = []
    for wi in range(n_words):
        word = "w" + "".join(chr(97 + c) for c in rng.integers(0, 26, 4))
        if rng.random() < 0.5:
            cut = int(rng.integers(1, len(word)))
            pieces.append((word[:cut], wi))
            pieces.append(("##" + word[cut:], wi))
        else:
            pieces.append((word, wi))
    return make_segment(pieces, n_layers, n_heads, rng, seg_id)


def make_extract(segments: list[Segment], n_layers: int = 1,
                 n_heads: int = 1) -> ExtractSet:
    extract = ExtractSet(n_layers, n_heads, segments)
    extract.validate()
    return extract
