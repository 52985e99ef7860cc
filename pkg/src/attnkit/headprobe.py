"""Each attention head treated as a zero-shot classifier.

A head predicts, for a source word, the other word it attends to most.
That prediction is scored against dependency gold heads (both directions)
and against coreference antecedents, next to fixed-offset and rule-based
baselines that need no attention at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpora import (CorefDoc, DepSentence, Mention, PRONOUN_ATTRIBUTES, ROOT, align)
from .errors import AlignmentError
from .interchange import ExtractSet, HeadId
from .wordmap import WordAttentionMatrix, to_word_attention

DEP_TO_HEAD = "DEP_TO_HEAD"
HEAD_TO_DEP = "HEAD_TO_DEP"
DIRECTIONS = (DEP_TO_HEAD, HEAD_TO_DEP)

ALL_RELATIONS = "all"
POSSESSIVE_CLITICS = ("'s", "'")


@dataclass
class RelationScore:
    relation: str
    head: HeadId
    direction: str
    correct: int
    support: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.support


@dataclass
class OffsetBaseline:
    relation: str
    best_offset: int
    accuracy: float
    support: int


@dataclass
class DependencyEval:
    overall: RelationScore
    per_relation: dict[str, RelationScore]


def predict_most_attended(matrix: WordAttentionMatrix, from_word: int) -> int:
    """Index of the other word receiving most attention from from_word.

    Delimiters are never candidates; exact ties go to the lowest index.
    """
    row = matrix.word_view()[from_word]
    if len(row) < 2:
        raise ValueError("no candidate words besides the source")
    scores = row.copy()
    scores[from_word] = -np.inf
    return int(np.argmax(scores))


def _pair_segments(extract: ExtractSet, sentences: list[DepSentence]):
    if len(extract.segments) != len(sentences):
        raise AlignmentError(
            f"{len(extract.segments)} segments vs {len(sentences)} sentences")
    for seg, sent in zip(extract.segments, sentences):
        align(seg, sent.words)
        yield seg, sent


def _clitic_positions(sent: DepSentence, dep: int) -> tuple[int, ...]:
    """Word positions equivalent to dependent `dep` under the clitic rule."""
    nxt = dep + 1
    if nxt < len(sent.words) and sent.words[nxt] in POSSESSIVE_CLITICS:
        return (dep, nxt)
    return (dep,)


def eval_dependency(extract: ExtractSet, sentences: list[DepSentence], head: HeadId,
                    direction: str, clitic_equivalence: bool = False) -> DependencyEval:
    """Score one head on head/dependent selection, overall and per relation.

    DEP_TO_HEAD asks the dependent's row for its gold head; HEAD_TO_DEP asks
    the head word's row for the dependent, once per (dependent, head) pair.
    With clitic_equivalence, a possessive clitic directly after the dependent
    stands in for it on `poss` pairs (both as source and as prediction).
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    counts: dict[str, list[int]] = {}
    total = [0, 0]
    for seg, sent in _pair_segments(extract, sentences):
        matrix = to_word_attention(seg, head, keep_special=False)
        for dep, gold in enumerate(sent.gold_head):
            if gold == ROOT:
                continue
            rel = sent.relation[dep]
            use_clitics = clitic_equivalence and rel == "poss"
            dep_alias = _clitic_positions(sent, dep) if use_clitics else (dep,)
            if direction == DEP_TO_HEAD:
                ok = any(predict_most_attended(matrix, d) == gold for d in dep_alias)
            else:
                ok = predict_most_attended(matrix, gold) in dep_alias
            stats = counts.setdefault(rel, [0, 0])
            stats[0] += int(ok)
            stats[1] += 1
            total[0] += int(ok)
            total[1] += 1
    if total[1] == 0:
        raise ValueError("no evaluable (dependent, head) pairs in corpus")
    per_relation = {
        rel: RelationScore(rel, head, direction, c, n)
        for rel, (c, n) in sorted(counts.items())
    }
    return DependencyEval(RelationScore(ALL_RELATIONS, head, direction, *total),
                          per_relation)


def offset_baseline(sentences: list[DepSentence], relation: str | None,
                    scan_range: int = 10) -> OffsetBaseline:
    """Best fixed-offset predictor for one relation (None/"all" = every pair).

    Scans nonzero offsets in [-scan_range, +scan_range]; predictions falling
    outside the sentence count as wrong. Ties prefer the smaller |offset|,
    then the negative one.
    """
    if relation == ALL_RELATIONS:
        relation = None
    pairs = [(dep, gold, len(sent))
             for sent in sentences
             for dep, gold in enumerate(sent.gold_head)
             if gold != ROOT and (relation is None or sent.relation[dep] == relation)]
    if not pairs:
        raise ValueError(f"relation {relation!r} does not occur in the corpus")
    best = None
    for offset in range(-scan_range, scan_range + 1):
        if offset == 0:
            continue
        correct = sum(1 for dep, gold, n in pairs
                      if 0 <= dep + offset < n and dep + offset == gold)
        key = (-correct, abs(offset), 0 if offset < 0 else 1)
        if best is None or key < best[0]:
            best = (key, offset, correct)
    _, offset, correct = best
    return OffsetBaseline(relation or ALL_RELATIONS, offset,
                          correct / len(pairs), len(pairs))


#
# Coreference antecedent selection
#

@dataclass
class CorefEval:
    correct: int
    support: int
    by_type: dict[str, list[int]] = field(default_factory=dict)  # type -> [correct, total]
    skipped_docs: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.support if self.support else 0.0

    def type_accuracy(self, mention_type: str) -> float:
        c, n = self.by_type.get(mention_type, (0, 0))
        return c / n if n else 0.0

    def _tally(self, mention_type: str, ok: bool) -> None:
        stats = self.by_type.setdefault(mention_type, [0, 0])
        stats[0] += int(ok)
        stats[1] += 1
        self.correct += int(ok)
        self.support += 1


def _evaluable(doc: CorefDoc):
    """(mention, earlier mentions, antecedents) for each scorable mention."""
    for mi, mention in enumerate(doc.mentions):
        earlier = doc.mentions[:mi]
        antecedents = [a for a in earlier if a.cluster_id == mention.cluster_id]
        if antecedents:
            yield mention, earlier, antecedents


def eval_coref(extract: ExtractSet, docs: list[CorefDoc], head: HeadId,
               all_words: bool = False) -> CorefEval:
    """Antecedent selection: does a mention's head word most attend to the
    head word of one of its antecedents?

    Candidates default to the head words of strictly earlier mentions; with
    all_words the argmax runs over every other word instead.
    """
    if len(extract.segments) != len(docs):
        raise AlignmentError(f"{len(extract.segments)} segments vs {len(docs)} documents")
    result = CorefEval(0, 0)
    for seg, doc in zip(extract.segments, docs):
        align(seg, doc.tokens)
        matrix = to_word_attention(seg, head, keep_special=False).word_view()
        scored_any = False
        for mention, earlier, antecedents in _evaluable(doc):
            src = mention.head_index
            gold_words = {a.head_index for a in antecedents} - {src}
            if all_words:
                candidates = [w for w in range(len(doc.tokens)) if w != src]
            else:
                candidates = sorted({a.head_index for a in earlier} - {src})
            if not candidates or not gold_words:
                continue
            row = matrix[src, candidates]
            predicted = candidates[int(np.argmax(row))]
            result._tally(mention.mention_type, predicted in gold_words)
            scored_any = True
        if not scored_any:
            result.skipped_docs += 1
    return result


def _attributes(word: str):
    return PRONOUN_ATTRIBUTES.get(word.lower(), (None, None, None))


def _compatible(word_a: str, word_b: str) -> bool:
    """Number/gender/person compatibility; unknown matches anything."""
    return all(x is None or y is None or x == y
               for x, y in zip(_attributes(word_a), _attributes(word_b)))


def _sieve_antecedent(doc: CorefDoc, mention: Mention,
                      earlier: list[Mention]) -> Mention:
    """Nearest earlier mention passing the earliest applicable sieve:
    full string match, head word match, attribute match, anything."""
    text = doc.span_text(mention).lower()
    head = doc.head_word(mention).lower()
    reversed_earlier = earlier[::-1]
    for candidate in reversed_earlier:
        if doc.span_text(candidate).lower() == text:
            return candidate
    for candidate in reversed_earlier:
        if doc.head_word(candidate).lower() == head:
            return candidate
    for candidate in reversed_earlier:
        if _compatible(doc.head_word(mention), doc.head_word(candidate)):
            return candidate
    return reversed_earlier[0]


def coref_baselines(docs: list[CorefDoc]) -> dict[str, CorefEval]:
    """Attention-free baselines over the same evaluable mentions.

    nearest: previous mention. head_match: nearest earlier mention with the
    same (case-folded) head word, else nearest. rule_sieve: four ordered
    sieves, nearest match of the earliest sieve that fires.
    """
    results = {name: CorefEval(0, 0) for name in ("nearest", "head_match", "rule_sieve")}
    for doc in docs:
        for mention, earlier, _ in _evaluable(doc):
            nearest = earlier[-1]
            head = doc.head_word(mention).lower()
            matched = next((c for c in earlier[::-1]
                            if doc.head_word(c).lower() == head), nearest)
            picks = {
                "nearest": nearest,
                "head_match": matched,
                "rule_sieve": _sieve_antecedent(doc, mention, earlier),
            }
            for name, pick in picks.items():
                results[name]._tally(mention.mention_type,
                                     pick.cluster_id == mention.cluster_id)
    return results
