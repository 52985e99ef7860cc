"""Corpus ingestion: dependency treebanks, coreference documents, embeddings.

All loaded objects are plain immutable-by-convention dataclasses; loaders
validate on the way in so downstream code can assume well-formed data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ParseError
from .interchange import DELIMITERS, Segment

# gold_head sentinel for the root word of a sentence.
ROOT = -1

PRONOUN = "PRONOUN"
PROPER = "PROPER"
NOMINAL = "NOMINAL"
MENTION_TYPES = (PRONOUN, PROPER, NOMINAL)

# Number / gender / person attributes for English personal and possessive
# pronouns. None means unknown; unknown is compatible with anything.
PRONOUN_ATTRIBUTES = {
    "he": ("sg", "m", 3), "him": ("sg", "m", 3), "his": ("sg", "m", 3),
    "himself": ("sg", "m", 3),
    "she": ("sg", "f", 3), "her": ("sg", "f", 3), "hers": ("sg", "f", 3),
    "herself": ("sg", "f", 3),
    "it": ("sg", "n", 3), "its": ("sg", "n", 3), "itself": ("sg", "n", 3),
    "they": ("pl", None, 3), "them": ("pl", None, 3), "their": ("pl", None, 3),
    "theirs": ("pl", None, 3), "themselves": ("pl", None, 3),
    "i": ("sg", None, 1), "me": ("sg", None, 1), "my": ("sg", None, 1),
    "mine": ("sg", None, 1), "myself": ("sg", None, 1),
    "we": ("pl", None, 1), "us": ("pl", None, 1), "our": ("pl", None, 1),
    "ours": ("pl", None, 1), "ourselves": ("pl", None, 1),
    "you": (None, None, 2), "your": (None, None, 2), "yours": (None, None, 2),
    "yourself": ("sg", None, 2), "yourselves": ("pl", None, 2),
}
PRONOUN_WORDS = frozenset(PRONOUN_ATTRIBUTES)


@dataclass
class DepSentence:
    words: list[str]
    gold_head: list[int]  # 0-based head index per word, ROOT for the root
    relation: list[str]

    def __len__(self) -> int:
        return len(self.words)

    def validate(self) -> None:
        n = len(self.words)
        if len(self.gold_head) != n or len(self.relation) != n:
            raise ParseError("sentence fields have mismatched lengths")
        if not any(h == ROOT for h in self.gold_head):
            raise ParseError(f"sentence {self.words[:4]}... has no root word")
        for i, h in enumerate(self.gold_head):
            if h == i:
                raise ParseError(f"word {i} ({self.words[i]!r}) is its own head")
            if h != ROOT and not 0 <= h < n:
                raise ParseError(f"word {i} has out-of-range head {h}")


@dataclass
class Mention:
    start: int  # inclusive word span
    end: int
    cluster_id: int
    head_index: int  # word index within [start, end]
    mention_type: str

    def validate(self, doc_len: int) -> None:
        if not 0 <= self.start <= self.head_index <= self.end < doc_len:
            raise ParseError(
                f"mention span ({self.start}, {self.end}) head {self.head_index} "
                f"invalid for document of {doc_len} tokens")
        if self.mention_type not in MENTION_TYPES:
            raise ParseError(f"unknown mention type {self.mention_type!r}")


@dataclass
class CorefDoc:
    doc_id: str
    tokens: list[str]
    mentions: list[Mention] = field(default_factory=list)

    def span_text(self, m: Mention) -> str:
        return " ".join(self.tokens[m.start:m.end + 1])

    def head_word(self, m: Mention) -> str:
        return self.tokens[m.head_index]


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]

    def lookup(self, word: str) -> np.ndarray:
        """Vector for word; zero vector when unknown (no-information bias)."""
        vec = self.entries.get(word)
        if vec is None:
            return np.zeros(self.dim)
        return vec

    def lookup_all(self, words: list[str]) -> np.ndarray:
        return np.stack([self.lookup(w) for w in words]) if words else np.zeros((0, self.dim))


def load_dep_corpus(path) -> list[DepSentence]:
    """Read a CoNLL-U/X file. Uses columns ID, FORM, HEAD, DEPREL only.

    Multi-word ranges (ID "1-2") and empty nodes (ID "1.1") are skipped;
    comment lines start with '#'. HEAD is converted from 1-based to 0-based,
    HEAD=0 becomes the ROOT sentinel.
    """
    sentences: list[DepSentence] = []
    words: list[str] = []
    heads: list[int] = []
    rels: list[str] = []
    lines: list[int] = []

    def flush():
        if not words:
            return
        n = len(words)
        for i, (h, ln) in enumerate(zip(heads, lines)):
            if h != ROOT and not 0 <= h < n:
                raise ParseError(f"line {ln}: head {h + 1} out of range for "
                                 f"{n}-word sentence")
            if h == i:
                raise ParseError(f"line {ln}: word is its own head")
        sent = DepSentence(list(words), list(heads), list(rels))
        sent.validate()
        sentences.append(sent)
        words.clear(), heads.clear(), rels.clear(), lines.clear()

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t") if "\t" in line else line.split()
            if len(cols) < 8:
                raise ParseError(f"line {lineno}: expected >= 8 columns, got {len(cols)}")
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                continue
            try:
                head = int(cols[6])
            except ValueError:
                raise ParseError(f"line {lineno}: non-integer head {cols[6]!r}") from None
            words.append(cols[1])
            heads.append(ROOT if head == 0 else head - 1)
            rels.append(cols[7])
            lines.append(lineno)
    flush()
    return sentences


def save_dep_corpus(sentences: list[DepSentence], path) -> None:
    """Write sentences in the 8-column tab-separated layout read back above."""
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            for i, (word, head, rel) in enumerate(
                    zip(sent.words, sent.gold_head, sent.relation)):
                conll_head = 0 if head == ROOT else head + 1
                fh.write(f"{i + 1}\t{word}\t_\t_\t_\t_\t{conll_head}\t{rel}\n")
            fh.write("\n")


def _guess_mention_type(tokens: list[str], head_index: int) -> str:
    word = tokens[head_index]
    if word.lower() in PRONOUN_WORDS:
        return PRONOUN
    sentence_initial = head_index == 0 or tokens[head_index - 1] in {".", "!", "?"}
    if word[:1].isupper() and not sentence_initial:
        return PROPER
    return NOMINAL


def load_coref_corpus(path) -> list[CorefDoc]:
    """Read newline-delimited JSON coref documents.

    Schema per line: {"doc_id", "tokens": [...], "mentions": [{"start",
    "end", "cluster", "head", "type"?}]}. Cluster labels may be arbitrary
    JSON scalars; they are interned to dense integers per document.
    """
    docs: list[CorefDoc] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                tokens = list(data["tokens"])
                raw_mentions = data["mentions"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"line {lineno}: bad document ({exc})") from exc
            clusters: dict = {}
            mentions = []
            for m in raw_mentions:
                try:
                    start, end, head = int(m["start"]), int(m["end"]), int(m["head"])
                    cluster = m["cluster"]
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"line {lineno}: bad mention ({exc})") from exc
                cid = clusters.setdefault(cluster, len(clusters))
                mtype = m.get("type") or _guess_mention_type(tokens, head)
                mention = Mention(start, end, cid, head, mtype)
                try:
                    mention.validate(len(tokens))
                except ParseError as exc:
                    raise ParseError(f"line {lineno}: {exc}") from None
                mentions.append(mention)
            mentions.sort(key=lambda m: (m.start, m.end))
            docs.append(CorefDoc(str(data.get("doc_id", f"doc{lineno}")), tokens, mentions))
    return docs


def load_embeddings(path) -> EmbeddingTable:
    """Read a text embedding table: one "word v1 v2 ... vd" entry per line."""
    entries: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise ParseError(f"line {lineno}: entry has no values")
            elif len(values) != dim:
                raise ParseError(
                    f"line {lineno}: expected {dim} values, got {len(values)}")
            try:
                entries[word] = np.array([float(v) for v in values])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric value") from None
    if dim is None:
        raise ParseError(f"{path}: empty embedding file")
    return EmbeddingTable(dim, entries)


def align(segment: Segment, words: list[str], marker: str = "##") -> list[list[int]]:
    """Check that a segment spells exactly the given word sequence.

    Returns, per word, the list of token positions that make it up. Raises
    AlignmentError at the first divergent word.
    """
    groups: list[list[int]] = [[] for _ in words]
    for pos, (flag, wi) in enumerate(zip(segment.special_flags, segment.word_index)):
        if flag in DELIMITERS:
            continue
        if wi >= len(words):
            raise AlignmentError(
                f"segment {segment.id!r}: token {pos} maps to word {wi} but the "
                f"sentence has {len(words)} words")
        groups[wi].append(pos)
    for wi, (word, group) in enumerate(zip(words, groups)):
        spelled = "".join(
            segment.tokens[p][len(marker):] if segment.tokens[p].startswith(marker)
            else segment.tokens[p]
            for p in group)
        if spelled != word:
            raise AlignmentError(
                f"segment {segment.id!r}: word {wi} is {word!r} in the corpus but "
                f"tokens spell {spelled!r}")
    return groups
