"""Token-token attention maps converted to word-word maps.

Split words are merged in two moves: attention *to* a split word is summed
over its tokens (column merge) and attention *from* a split word is averaged
over its tokens (row merge). The two moves act on disjoint axes, so they
commute; columns-first is the canonical order. Row merging by mean keeps
every row a distribution, and column summing only regroups mass, so with
keep_special the row sums stay at 1.

CLS/SEP delimiters are never prediction sources, so their rows are always
dropped. Their columns are kept only under keep_special; when dropped, rows
are NOT renormalized - the mass they held is simply out of reach of argmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interchange import DELIMITERS, HeadId, Segment


@dataclass
class WordAttentionMatrix:
    """Word-level attention for one head of one segment.

    matrix[r, c] is attention from words[r] to column c. Columns are words
    in order; with kept_special, delimiter columns stay interleaved at their
    original positions and col_word holds -1 there.
    """

    words: list[str]
    matrix: np.ndarray
    col_word: np.ndarray  # per column: source word index, or -1 for a delimiter
    col_labels: list[str]
    kept_special: bool

    @property
    def n_words(self) -> int:
        return len(self.words)

    def word_view(self) -> np.ndarray:
        """The square [from-word, to-word] matrix, delimiter columns removed."""
        if not self.kept_special:
            return self.matrix
        return self.matrix[:, self.col_word >= 0]


def merge_columns(matrix: np.ndarray, groups: list[list[int]]) -> np.ndarray:
    """Sum the given column groups of ... x T x T' attention, one output column each."""
    if not groups:
        return np.zeros(matrix.shape[:-1] + (0,))
    return np.stack([matrix[..., idxs].sum(axis=-1) for idxs in groups], axis=-1)


def merge_rows(matrix: np.ndarray, groups: list[list[int]]) -> np.ndarray:
    """Average the given row groups, one output row each."""
    if not groups:
        return np.zeros(matrix.shape[:-2] + (0,) + matrix.shape[-1:])
    return np.stack([matrix[..., idxs, :].mean(axis=-2) for idxs in groups], axis=-2)


def _plan(segment: Segment, keep_special: bool):
    """Column groups (words + optionally delimiters) and row groups (words)."""
    n_words = segment.n_words
    word_tokens: list[list[int]] = [[] for _ in range(n_words)]
    col_groups: list[list[int]] = []
    col_word: list[int] = []
    col_labels: list[str] = []
    col_flags: list[str] = []
    emitted = [False] * n_words
    for pos, (flag, wi) in enumerate(zip(segment.special_flags, segment.word_index)):
        if flag in DELIMITERS:
            if keep_special:
                col_groups.append([pos])
                col_word.append(-1)
                col_labels.append(segment.tokens[pos])
                col_flags.append(flag)
            continue
        word_tokens[wi].append(pos)
        if not emitted[wi]:
            emitted[wi] = True
            col_groups.append(word_tokens[wi])
            col_word.append(int(wi))
            col_labels.append("")
            col_flags.append("")
    words = segment.words()
    for ci, wi in enumerate(col_word):
        if wi >= 0:
            col_labels[ci] = words[wi]
    return words, word_tokens, col_groups, col_word, col_labels, col_flags


def to_word_attention(segment: Segment, head: HeadId,
                      keep_special: bool = False) -> WordAttentionMatrix:
    """Convert one head's token attention to word-level attention."""
    if not (0 <= head.layer < segment.attention.shape[0]
            and 0 <= head.head < segment.attention.shape[1]):
        raise IndexError(f"head {head} out of range for "
                         f"{segment.attention.shape[:2]} attention")
    token_matrix = segment.attention[head.layer, head.head].astype(np.float64)
    words, word_tokens, col_groups, col_word, col_labels, _ = _plan(segment, keep_special)
    merged = merge_rows(merge_columns(token_matrix, col_groups), word_tokens)
    return WordAttentionMatrix(words, merged, np.array(col_word, dtype=np.int64),
                               col_labels, keep_special)


@dataclass
class SegmentWordAttention:
    """Word-level attention for every head of one segment at once.

    tensor is float64 [n_heads_total, C, C], head axis layer-major to match
    HeadId.flat(). Without keep_delimiters, C equals the word count and rows
    and columns are words in order. With keep_delimiters the matrix stays
    square: unlike to_word_attention, delimiters keep their own (unmerged)
    rows as well as columns, so attention from [CLS]/[SEP] stays readable.
    """

    labels: list[str]
    col_word: np.ndarray
    col_flag: list[str]  # delimiter category per column, "" for word columns
    tensor: np.ndarray

    @property
    def n_positions(self) -> int:
        return len(self.labels)

    def word_columns(self) -> np.ndarray:
        """Column index of each word, in word order."""
        return np.flatnonzero(self.col_word >= 0)


def word_attention_tensor(segment: Segment,
                          keep_delimiters: bool = False) -> SegmentWordAttention:
    """Batched conversion of all heads, same merge steps as to_word_attention."""
    words, word_tokens, col_groups, col_word, col_labels, col_flags = _plan(
        segment, keep_delimiters)
    full = segment.attention.astype(np.float64)
    row_groups = col_groups if keep_delimiters else word_tokens
    merged = merge_rows(merge_columns(full, col_groups), row_groups)
    n_layers, n_heads = merged.shape[:2]
    labels = col_labels if keep_delimiters else words
    tensor = merged.reshape((n_layers * n_heads,) + merged.shape[2:])
    return SegmentWordAttention(labels, np.array(col_word, dtype=np.int64),
                                col_flags, tensor)
