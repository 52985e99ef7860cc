"""Synthetic attention extracts with known structure, plus naive oracles.

The generators build extracts whose heads follow declared behaviors (uniform,
fixed offset, gold-head pointing, [SEP] sink, seeded noise), so every analysis
in the toolkit can be exercised against ground truth without a real model.

The oracle_* functions at the bottom re-derive the head-probing definitions
with plain Python loops. They deliberately share no code with wordmap or
headprobe (only data containers and constants), refuse large inputs, and
exist solely as independent references for tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpora import CorefDoc, DepSentence, ROOT
from .errors import ValidationError
from .interchange import (CLS, ExtractSet, NO_WORD, OTHER, PERIOD_COMMA, SEP,
                          Segment)

UNIFORM = "uniform"
OFFSET = "offset"
GOLD_HEAD = "gold_head"
SEP_SINK = "sep_sink"
NOISE = "noise"
BEHAVIOR_KINDS = (UNIFORM, OFFSET, GOLD_HEAD, SEP_SINK, NOISE)

VOCAB = ("the", "a", "market", "plan", "report", "price", "company", "board",
         "share", "rate", "group", "new", "old", "big", "small", "sold",
         "bought", "said", "made", "saw", "in", "of", "over", "under")
RELATIONS = ("det", "dobj", "nsubj", "amod", "prep", "pobj", "poss", "advmod")

ORACLE_MAX_WORDS = 30
ORACLE_MAX_HEADS = 4


@dataclass(frozen=True)
class Behavior:
    kind: str
    offset: int = 0
    mass: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in BEHAVIOR_KINDS:
            raise ValidationError(f"unknown behavior kind {self.kind!r}")
        if self.kind == GOLD_HEAD and not 0.0 < self.mass <= 1.0:
            raise ValidationError(f"gold-head mass {self.mass} outside (0, 1]")

    @classmethod
    def parse(cls, text: str) -> "Behavior":
        """Parse "uniform", "offset:+1", "gold:0.9", "sep_sink", "noise:7"."""
        name, _, arg = text.partition(":")
        try:
            if name == UNIFORM:
                return cls(UNIFORM)
            if name == OFFSET:
                return cls(OFFSET, offset=int(arg))
            if name in ("gold", GOLD_HEAD):
                return cls(GOLD_HEAD, mass=float(arg))
            if name == SEP_SINK:
                return cls(SEP_SINK)
            if name == NOISE:
                return cls(NOISE, seed=int(arg) if arg else 0)
        except ValueError as exc:
            raise ValidationError(f"bad behavior argument in {text!r}: {exc}") from exc
        raise ValidationError(f"unknown behavior {text!r}")

    def tag(self) -> str:
        if self.kind == OFFSET:
            return f"offset{self.offset:+d}"
        if self.kind == GOLD_HEAD:
            return f"gold{self.mass:g}"
        if self.kind == NOISE:
            return f"noise{self.seed}"
        return self.kind


@dataclass
class SynthSpec:
    n_layers: int
    n_heads: int
    behaviors: list[Behavior]  # flat, layer-major
    seed: int = 0
    split_prob: float = 0.0  # chance a word is tokenized into several pieces
    n_sentences: int = 100  # used when generate() is not handed a corpus

    def validate(self) -> None:
        if len(self.behaviors) != self.n_layers * self.n_heads:
            raise ValidationError(f"{len(self.behaviors)} behaviors for "
                                  f"{self.n_layers}x{self.n_heads} heads")
        if not 0.0 <= self.split_prob <= 1.0:
            raise ValidationError(f"split_prob {self.split_prob} outside [0, 1]")
        for behavior in self.behaviors:
            behavior.validate()


def random_sentences(count: int, seed: int, min_words: int = 3,
                     max_words: int = 12) -> list[DepSentence]:
    """Random dependency corpus: word 0 is the root, punctuation hangs off it."""
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(count):
        n = int(rng.integers(min_words, max_words + 1))
        words = [VOCAB[i] for i in rng.integers(0, len(VOCAB), n)]
        heads = [ROOT]
        for i in range(1, n):
            head = int(rng.integers(0, n - 1))  # any other word, either side
            heads.append(head + 1 if head >= i else head)
        rels = ["root"] + [RELATIONS[i] for i in rng.integers(0, len(RELATIONS), n - 1)]
        if n > 3 and rng.random() < 0.3:
            at = int(rng.integers(1, n))
            words.insert(at, ",")
            heads.insert(at, 0)
            rels.insert(at, "punct")
            heads = [h + 1 if h >= at and h != ROOT else h for h in heads]
            heads[at] = 0
        if rng.random() < 0.6:
            words.append(".")
            heads.append(0)
            rels.append("punct")
        sent = DepSentence(words, heads, rels)
        sent.validate()
        sentences.append(sent)
    return sentences


def _tokenize(words: list[str], split_prob: float, rng) -> tuple[list[str], list[int]]:
    """Word pieces with ## continuations; returns (tokens, word index per token)."""
    tokens: list[str] = []
    word_index: list[int] = []
    for wi, word in enumerate(words):
        if len(word) >= 4 and rng.random() < split_prob:
            cut = int(rng.integers(2, len(word) - 1))
            pieces = [word[:cut], "##" + word[cut:]]
        else:
            pieces = [word]
        tokens.extend(pieces)
        word_index.extend([wi] * len(pieces))
    return tokens, word_index


def _behavior_rows(behavior: Behavior, n_tokens: int, gold_token: list[int | None],
                   noise_key: tuple[int, ...]) -> np.ndarray:
    t = n_tokens
    if behavior.kind == UNIFORM:
        return np.full((t, t), 1.0 / t)
    if behavior.kind == OFFSET:
        if abs(behavior.offset) >= t:
            raise ValidationError(f"offset {behavior.offset} never lands inside "
                                  f"a {t}-token segment")
        rows = np.zeros((t, t))
        for pos in range(t):
            target = pos + behavior.offset
            rows[pos, target if 0 <= target < t else pos] = 1.0
        return rows
    if behavior.kind == GOLD_HEAD:
        rows = np.full((t, t), 1.0 / t)
        off = (1.0 - behavior.mass) / (t - 1)
        for pos, gold in enumerate(gold_token):
            if gold is not None:
                rows[pos] = off
                rows[pos, gold] = behavior.mass
        return rows
    if behavior.kind == SEP_SINK:
        rows = np.zeros((t, t))
        rows[:, t - 1] = 1.0
        return rows
    rng = np.random.default_rng(noise_key + (behavior.seed,))
    rows = rng.random((t, t)) + 1e-6
    return rows / rows.sum(axis=1, keepdims=True)


def generate(spec: SynthSpec, sentences: list[DepSentence] | None = None) -> ExtractSet:
    """Build an extract realizing the spec's behaviors over the sentences.

    Sentences default to random_sentences(spec.n_sentences, spec.seed). Output
    is deterministic given spec and sentences.
    """
    spec.validate()
    if sentences is None:
        sentences = random_sentences(spec.n_sentences, spec.seed)
    if not sentences:
        raise ValidationError("no sentences to generate from")
    segments = []
    for si, sent in enumerate(sentences):
        rng = np.random.default_rng((spec.seed, 7919, si))
        pieces, piece_word = _tokenize(sent.words, spec.split_prob, rng)
        tokens = ["[CLS]"] + pieces + ["[SEP]"]
        word_index = [NO_WORD] + piece_word + [NO_WORD]
        flags = [CLS]
        for token, wi in zip(pieces, piece_word):
            flags.append(PERIOD_COMMA if sent.words[wi] in (".", ",") else OTHER)
        flags.append(SEP)
        first_token = {}
        for pos, wi in enumerate(word_index):
            if wi != NO_WORD and wi not in first_token:
                first_token[wi] = pos
        gold_token: list[int | None] = []
        for wi in word_index:
            gold = sent.gold_head[wi] if wi != NO_WORD else ROOT
            gold_token.append(first_token[gold] if gold != ROOT else None)
        heads = [_behavior_rows(b, len(tokens), gold_token, (spec.seed, si, k))
                 for k, b in enumerate(spec.behaviors)]
        attention = (np.stack(heads)
                     .reshape(spec.n_layers, spec.n_heads, len(tokens), len(tokens))
                     .astype("<f4"))
        segments.append(Segment(f"synth-{si:04d}", tokens, flags,
                                np.array(word_index, dtype=np.int32), attention))
    extract = ExtractSet(spec.n_layers, spec.n_heads, segments)
    extract.validate()
    return extract


#
# Oracles. Plain loops straight from the definitions; see module docstring.
#

def _guard_words(n_words: int) -> None:
    if n_words > ORACLE_MAX_WORDS:
        raise ValueError(f"oracle guardrail: {n_words} words > {ORACLE_MAX_WORDS}")


def _guard_heads(segment: Segment) -> None:
    n = segment.attention.shape[0] * segment.attention.shape[1]
    if n > ORACLE_MAX_HEADS:
        raise ValueError(f"oracle guardrail: {n} heads > {ORACLE_MAX_HEADS}")


def _word_groups(segment: Segment) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for pos, wi in enumerate(segment.word_index):
        if wi != NO_WORD:
            groups.setdefault(int(wi), []).append(pos)
    return [groups[wi] for wi in sorted(groups)]


def _word_attention(segment: Segment, layer: int, head: int,
                    src_tokens: list[int], dst_tokens: list[int]) -> float:
    """Sum over destination tokens, average over source tokens."""
    total = 0.0
    for t in src_tokens:
        for u in dst_tokens:
            total += float(segment.attention[layer][head][t][u])
    return total / len(src_tokens)


def oracle_argmax(segment: Segment, layer: int, head: int, from_word: int) -> int:
    """Most-attended other word, ties to the lowest index."""
    _guard_heads(segment)
    groups = _word_groups(segment)
    _guard_words(len(groups))
    best = best_score = None
    for j in range(len(groups)):
        if j == from_word:
            continue
        score = _word_attention(segment, layer, head, groups[from_word], groups[j])
        if best_score is None or score > best_score:
            best, best_score = j, score
    if best is None:
        raise ValueError("no candidate words besides the source")
    return best


def oracle_offset_search(sentences: list[DepSentence], relation: str | None = None,
                         scan_range: int = 10) -> tuple[int, float]:
    """Exhaustive best fixed offset; ties to smaller |offset|, then negative."""
    pairs = []
    for sent in sentences:
        _guard_words(len(sent.words))
        for dep, gold in enumerate(sent.gold_head):
            if gold == ROOT:
                continue
            if relation not in (None, "all") and sent.relation[dep] != relation:
                continue
            pairs.append((dep, gold, len(sent.words)))
    if not pairs:
        raise ValueError("no pairs to score")
    preference = sorted((o for o in range(-scan_range, scan_range + 1) if o != 0),
                        key=lambda o: (abs(o), 0 if o < 0 else 1))
    best_offset, best_correct = None, -1
    for offset in preference:
        correct = 0
        for dep, gold, n in pairs:
            if 0 <= dep + offset < n and dep + offset == gold:
                correct += 1
        if correct > best_correct:
            best_offset, best_correct = offset, correct
    return best_offset, best_correct / len(pairs)


def oracle_coref(extract: ExtractSet, docs: list[CorefDoc], layer: int, head: int,
                 all_words: bool = False) -> dict:
    """Antecedent selection rescored from scratch.

    Returns {"correct", "support", "by_type"} over the same evaluable
    mentions as the checked implementation.
    """
    if len(extract.segments) != len(docs):
        raise ValueError(f"{len(extract.segments)} segments vs {len(docs)} documents")
    correct = support = 0
    by_type: dict[str, list[int]] = {}
    for seg, doc in zip(extract.segments, docs):
        _guard_heads(seg)
        groups = _word_groups(seg)
        _guard_words(len(groups))
        for mi, mention in enumerate(doc.mentions):
            earlier = doc.mentions[:mi]
            antecedents = [a for a in earlier if a.cluster_id == mention.cluster_id]
            if not antecedents:
                continue
            src = mention.head_index
            gold_words = {a.head_index for a in antecedents} - {src}
            if all_words:
                candidates = [w for w in range(len(groups)) if w != src]
            else:
                candidates = sorted({a.head_index for a in earlier} - {src})
            if not candidates or not gold_words:
                continue
            best = best_score = None
            for cand in candidates:
                score = _word_attention(seg, layer, head, groups[src], groups[cand])
                if best_score is None or score > best_score:
                    best, best_score = cand, score
            ok = best in gold_words
            stats = by_type.setdefault(mention.mention_type, [0, 0])
            stats[0] += int(ok)
            stats[1] += 1
            correct += int(ok)
            support += 1
    return {"correct": correct, "support": support, "by_type": by_type}
