"""Synthetic extract generation: behaviors, determinism, oracle guardrails."""

import numpy as np
import pytest

from attnkit.corpora import ROOT
from attnkit.errors import ValidationError
from attnkit.interchange import CLS, NO_WORD, OTHER, PERIOD_COMMA, SEP
from attnkit.synth import (ORACLE_MAX_HEADS, ORACLE_MAX_WORDS, Behavior,
                           SynthSpec, generate, oracle_argmax, oracle_coref,
                           oracle_offset_search, random_sentences)

from helpers import plain_segment


def one_head_extract(behavior, sentences=None, split_prob=0.0, seed=0):
    spec = SynthSpec(1, 1, [behavior], seed=seed, split_prob=split_prob,
                     n_sentences=5)
    return generate(spec, sentences)


class TestBehaviorParsing:
    def test_all_forms(self):
        assert Behavior.parse("uniform") == Behavior("uniform")
        assert Behavior.parse("offset:+2") == Behavior("offset", offset=2)
        assert Behavior.parse("offset:-1") == Behavior("offset", offset=-1)
        assert Behavior.parse("gold:0.9") == Behavior("gold_head", mass=0.9)
        assert Behavior.parse("sep_sink") == Behavior("sep_sink")
        assert Behavior.parse("noise:7") == Behavior("noise", seed=7)
        assert Behavior.parse("noise") == Behavior("noise")

    def test_bad_forms(self):
        for text in ("offset:one", "gold:", "gravity", "offset+1"):
            with pytest.raises(ValidationError):
                Behavior.parse(text)

    def test_tags_are_distinct(self):
        behaviors = [Behavior("uniform"), Behavior("offset", offset=1),
                     Behavior("offset", offset=-1),
                     Behavior("gold_head", mass=0.5), Behavior("sep_sink"),
                     Behavior("noise", seed=3)]
        tags = [b.tag() for b in behaviors]
        assert len(set(tags)) == len(tags)
        assert Behavior("offset", offset=1).tag() == "offset+1"

    def test_validation(self):
        with pytest.raises(ValidationError):
            Behavior("gold_head", mass=0.0).validate()
        with pytest.raises(ValidationError):
            Behavior("gold_head", mass=1.5).validate()
        with pytest.raises(ValidationError):
            Behavior("waves").validate()


class TestRandomSentences:
    def test_deterministic(self):
        assert random_sentences(10, seed=3) == random_sentences(10, seed=3)
        assert random_sentences(10, seed=3) != random_sentences(10, seed=4)

    def test_all_sentences_valid(self):
        for sent in random_sentences(200, seed=1):
            sent.validate()
            assert sent.gold_head[0] == ROOT
            assert 3 <= len(sent) <= 14  # up to two punctuation insertions

    def test_heads_fall_on_both_sides(self):
        before = after = 0
        for sent in random_sentences(100, seed=2):
            for dep, gold in enumerate(sent.gold_head):
                if gold == ROOT or sent.relation[dep] == "punct":
                    continue
                if gold < dep:
                    before += 1
                else:
                    after += 1
        assert before > 0 and after > 0


class TestGenerate:
    def test_deterministic_bytes(self):
        spec = SynthSpec(2, 2, [Behavior("uniform"), Behavior("offset", offset=1),
                                Behavior("noise", seed=3),
                                Behavior("gold_head", mass=0.8)],
                         seed=12, split_prob=0.4)
        a = generate(spec)
        b = generate(spec)
        assert len(a.segments) == len(b.segments)
        for seg_a, seg_b in zip(a.segments, b.segments):
            assert seg_a.tokens == seg_b.tokens
            assert seg_a.attention.tobytes() == seg_b.attention.tobytes()

    def test_uniform_rows(self):
        extract = one_head_extract(Behavior("uniform"))
        seg = extract.segments[0]
        t = seg.n_tokens
        np.testing.assert_allclose(seg.attention[0, 0], np.full((t, t), 1 / t),
                                   atol=1e-7)

    def test_offset_rows_with_boundary_fallback(self):
        extract = one_head_extract(Behavior("offset", offset=1))
        seg = extract.segments[0]
        t = seg.n_tokens
        rows = seg.attention[0, 0]
        for pos in range(t - 1):
            assert rows[pos, pos + 1] == 1.0
        assert rows[t - 1, t - 1] == 1.0

    def test_negative_offset(self):
        extract = one_head_extract(Behavior("offset", offset=-2))
        rows = extract.segments[0].attention[0, 0]
        assert rows[0, 0] == 1.0 and rows[1, 1] == 1.0
        assert rows[2, 0] == 1.0

    def test_offset_wider_than_segment(self):
        sents = random_sentences(2, seed=0, min_words=3, max_words=3)
        with pytest.raises(ValidationError):
            one_head_extract(Behavior("offset", offset=40), sentences=sents)

    def test_gold_head_rows(self):
        sents = random_sentences(3, seed=1)
        extract = one_head_extract(Behavior("gold_head", mass=0.9), sentences=sents)
        for seg, sent in zip(extract.segments, sents):
            rows = seg.attention[0, 0].astype(np.float64)
            t = seg.n_tokens
            word_first = {}
            for pos, wi in enumerate(seg.word_index):
                if wi != NO_WORD and int(wi) not in word_first:
                    word_first[int(wi)] = pos
            for pos, wi in enumerate(seg.word_index):
                if wi == NO_WORD or sent.gold_head[wi] == ROOT:
                    np.testing.assert_allclose(rows[pos], 1 / t, atol=1e-7)
                else:
                    gold = word_first[sent.gold_head[wi]]
                    np.testing.assert_allclose(rows[pos, gold], 0.9, atol=1e-7)
                    others = np.delete(rows[pos], gold)
                    np.testing.assert_allclose(others, 0.1 / (t - 1), atol=1e-7)

    def test_sep_sink_rows(self):
        extract = one_head_extract(Behavior("sep_sink"))
        for seg in extract.segments:
            rows = seg.attention[0, 0]
            assert (rows[:, -1] == 1.0).all()
            assert rows.sum() == seg.n_tokens

    def test_noise_seed_changes_rows_only(self):
        base = one_head_extract(Behavior("noise", seed=1))
        other = one_head_extract(Behavior("noise", seed=2))
        assert base.segments[0].tokens == other.segments[0].tokens
        assert base.segments[0].attention.tobytes() != \
            other.segments[0].attention.tobytes()

    def test_split_prob_produces_continuations(self):
        spec = SynthSpec(1, 1, [Behavior("uniform")], seed=5, split_prob=1.0)
        extract = generate(spec)
        pieces = [t for seg in extract.segments for t in seg.tokens]
        assert any(t.startswith("##") for t in pieces)
        extract.validate()

    def test_flags_mark_delimiters_and_punctuation(self):
        sents = random_sentences(20, seed=7)
        extract = one_head_extract(Behavior("uniform"), sentences=sents)
        for seg, sent in zip(extract.segments, sents):
            assert seg.special_flags[0] == CLS
            assert seg.special_flags[-1] == SEP
            for flag, wi in zip(seg.special_flags[1:-1], seg.word_index[1:-1]):
                expected = PERIOD_COMMA if sent.words[wi] in (".", ",") else OTHER
                assert flag == expected

    def test_random_specs_validate(self, rng):
        kinds = [lambda: Behavior("uniform"),
                 lambda: Behavior("offset", offset=int(rng.integers(-2, 3)) or 1),
                 lambda: Behavior("gold_head", mass=float(rng.uniform(0.3, 1.0))),
                 lambda: Behavior("sep_sink"),
                 lambda: Behavior("noise", seed=int(rng.integers(0, 99)))]
        for trial in range(20):
            layers = int(rng.integers(1, 3))
            heads = int(rng.integers(1, 3))
            behaviors = [kinds[int(rng.integers(0, len(kinds)))]()
                         for _ in range(layers * heads)]
            spec = SynthSpec(layers, heads, behaviors, seed=trial,
                             split_prob=float(rng.uniform(0, 0.8)), n_sentences=3)
            extract = generate(spec)
            extract.validate()

    def test_spec_shape_mismatch(self):
        with pytest.raises(ValidationError):
            generate(SynthSpec(2, 2, [Behavior("uniform")]))

    def test_empty_corpus(self):
        with pytest.raises(ValidationError):
            generate(SynthSpec(1, 1, [Behavior("uniform")]), sentences=[])


class TestOracleGuardrails:
    def test_argmax_rejects_wide_segments(self):
        seg = plain_segment([f"w{i}" for i in range(ORACLE_MAX_WORDS + 1)])
        with pytest.raises(ValueError):
            oracle_argmax(seg, 0, 0, 0)

    def test_argmax_rejects_many_heads(self):
        seg = plain_segment(["a", "b"], n_heads=ORACLE_MAX_HEADS + 1)
        with pytest.raises(ValueError):
            oracle_argmax(seg, 0, 0, 0)

    def test_offset_search_rejects_long_sentences(self):
        from attnkit.corpora import DepSentence
        words = ["root"] + [f"w{i}" for i in range(ORACLE_MAX_WORDS)]
        sent = DepSentence(words, [ROOT] + [0] * ORACLE_MAX_WORDS,
                           ["root"] + ["dep"] * ORACLE_MAX_WORDS)
        with pytest.raises(ValueError):
            oracle_offset_search([sent], None)

    def test_coref_rejects_mismatched_inputs(self):
        extract = one_head_extract(Behavior("uniform"))
        with pytest.raises(ValueError):
            oracle_coref(extract, [], 0, 0)

    def test_offset_search_empty(self):
        with pytest.raises(ValueError):
            oracle_offset_search([], None)
