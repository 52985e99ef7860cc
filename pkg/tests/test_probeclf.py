"""Trainable head-selection probes: scoring, gradients, training, checkpoints."""

import numpy as np
import pytest

from attnkit.corpora import ROOT, DepSentence, EmbeddingTable
from attnkit.errors import CorruptFileError, FormatError, ValidationError
from attnkit.probeclf import (LOSSES, AttnOnlyProbe, AttnWordsProbe,
                              DistanceWordsModel, SentenceBatch, TrainConfig,
                              attn_only_loss, build_batches, distance_features,
                              eval_uas, load_probe, probe_kind,
                              right_branching, save_probe, score,
                              score_attn_only, score_attn_words, train_probe)
from attnkit.synth import Behavior, SynthSpec, generate, random_sentences

from helpers import make_extract, plain_segment


def random_batch(rng, n_heads=3, n_positions=6, dim=4, n_pairs=3):
    """Standalone batch with row-stochastic attention and random embeddings."""
    attn = rng.random((n_heads, n_positions, n_positions))
    attn /= attn.sum(axis=-1, keepdims=True)
    emb = rng.normal(size=(n_positions, dim))
    pairs = []
    for _ in range(n_pairs):
        j = int(rng.integers(0, n_positions))
        gold = int(rng.integers(0, n_positions - 1))
        pairs.append((j, gold + 1 if gold >= j else gold))
    candidates = np.ones(n_positions, dtype=bool)
    return SentenceBatch([f"w{i}" for i in range(n_positions)], attn, emb,
                         pairs, candidates)


def gold_training_setup(n_sentences=20, seed=11):
    sents = random_sentences(n_sentences, seed=seed)
    spec = SynthSpec(1, 2, [Behavior("gold_head", mass=0.9),
                            Behavior("noise", seed=1)], seed=seed)
    extract = generate(spec, sents)
    return build_batches(extract, sents)


class TestBuildBatches:
    def test_pairs_skip_root_by_default(self):
        sents = [DepSentence(["root", "a", "b"], [ROOT, 2, 0],
                             ["root", "dep", "nsubj"])]
        seg = plain_segment(sents[0].words)
        batches = build_batches(make_extract([seg]), sents)
        assert batches[0].pairs == [(1, 2), (2, 0)]
        np.testing.assert_array_equal(batches[0].candidates, [True] * 3)
        assert batches[0].attn.shape == (1, 3, 3)

    def test_root_to_cls_adds_delimiter_columns(self):
        sents = [DepSentence(["root", "a", "b"], [ROOT, 2, 0],
                             ["root", "dep", "nsubj"])]
        seg = plain_segment(sents[0].words)
        batches = build_batches(make_extract([seg]), sents, root_to_cls=True)
        batch = batches[0]
        # columns: [CLS] root a b [SEP]; the root word is paired with [CLS]
        assert batch.attn.shape == (1, 5, 5)
        assert batch.pairs == [(1, 0), (2, 3), (3, 1)]
        np.testing.assert_array_equal(batch.candidates,
                                      [True, True, True, True, False])
        np.testing.assert_array_equal(batch.positions, [-1, 0, 1, 2, -1])

    def test_root_to_cls_needs_attention(self):
        sents = [DepSentence(["root", "a"], [ROOT, 0], ["root", "dep"])]
        with pytest.raises(ValidationError):
            build_batches(None, sents, root_to_cls=True)

    def test_root_to_cls_needs_cls_token(self):
        from attnkit.interchange import OTHER, Segment
        sents = [DepSentence(["a", "b"], [ROOT, 0], ["root", "dep"])]
        a = np.full((1, 1, 2, 2), 0.5, dtype="<f4")
        seg = Segment("s0", ["a", "b"], [OTHER, OTHER],
                      np.array([0, 1], dtype=np.int32), a)
        with pytest.raises(ValidationError):
            build_batches(make_extract([seg]), sents, root_to_cls=True)

    def test_count_mismatch(self):
        sents = [DepSentence(["root", "a"], [ROOT, 0], ["root", "dep"])]
        seg = plain_segment(sents[0].words)
        with pytest.raises(ValidationError):
            build_batches(make_extract([seg]), sents + sents)

    def test_embeddings_fill_word_rows_only(self):
        sents = [DepSentence(["root", "a"], [ROOT, 0], ["root", "dep"])]
        seg = plain_segment(sents[0].words)
        table = EmbeddingTable(2, {"root": np.array([1.0, 2.0]),
                                   "a": np.array([3.0, 4.0])})
        batch = build_batches(make_extract([seg]), sents, embeddings=table,
                              root_to_cls=True)[0]
        np.testing.assert_array_equal(
            batch.emb, [[0, 0], [1, 2], [3, 4], [0, 0]])

    def test_no_extract_keeps_word_positions(self):
        sents = [DepSentence(["root", "a", "b"], [ROOT, 2, 0],
                             ["root", "dep", "nsubj"])]
        batch = build_batches(None, sents)[0]
        assert batch.attn is None
        assert batch.pairs == [(1, 2), (2, 0)]
        assert batch.n_positions == 3


class TestScoring:
    def test_distributions_sum_to_one(self, rng):
        probes = [AttnOnlyProbe(rng.normal(size=3), rng.normal(size=3)),
                  AttnWordsProbe(rng.normal(size=(3, 8)), rng.normal(size=(3, 8))),
                  DistanceWordsModel.init(4, seed=0)]
        for _ in range(50):
            batch = random_batch(rng)
            for probe in probes:
                for j, _ in batch.pairs:
                    p = score(probe, batch, j)
                    assert abs(p.sum() - 1.0) <= 1e-9
                    assert p[j] == 0.0
                    assert (p >= 0).all()

    def test_words_probe_reduces_to_scalar_probe(self, rng):
        """With identical embeddings everywhere, the word-sensitive weights
        collapse to one scalar per head and both probes agree."""
        v = rng.normal(size=4)
        W = rng.normal(size=(3, 8))
        U = rng.normal(size=(3, 8))
        vv = np.concatenate([v, v])
        scalar = AttnOnlyProbe(W @ vv, U @ vv)
        wordy = AttnWordsProbe(W, U)
        for _ in range(20):
            batch = random_batch(rng)
            batch.emb[:] = v
            for j in range(batch.n_positions):
                p_scalar = score(scalar, batch, j)
                p_wordy = score(wordy, batch, j)
                np.testing.assert_allclose(p_wordy, p_scalar, atol=1e-12)

    def test_head_count_checked(self, rng):
        batch = random_batch(rng, n_heads=3)
        with pytest.raises(ValueError):
            score_attn_only(AttnOnlyProbe.zeros(2), batch.attn, 0)

    def test_feature_width_checked(self, rng):
        batch = random_batch(rng, dim=4)
        probe = AttnWordsProbe.zeros(3, dim=5)
        with pytest.raises(ValueError):
            score_attn_words(probe, batch.attn, batch.emb, 0)

    def test_no_candidates(self, rng):
        batch = random_batch(rng)
        none = np.zeros(batch.n_positions, dtype=bool)
        with pytest.raises(ValueError):
            score_attn_only(AttnOnlyProbe.zeros(3), batch.attn, 0, none)

    def test_distance_features_layout(self):
        feats = distance_features(50, j=2)
        assert feats.shape == (50, 11)
        # offset indicators fire exactly on their own diagonal band
        assert feats[1, 3] == 1.0 and feats[1].sum() == 1.0 + 1.0  # -1 + behind
        assert feats[6, 8] == 1.0  # +4
        assert feats[2].sum() == 1.0  # offset 0 indicator only, no distance
        # distances cap at 40
        assert feats[49, -1] == 40.0
        np.testing.assert_array_equal(feats[0, :9],
                                      [0, 0, 1, 0, 0, 0, 0, 0, 0])
        assert feats[0, 9] == 2.0 and feats[0, 10] == 0.0

    def test_custom_scorer_dispatch(self, rng):
        batch = random_batch(rng)
        fixed = np.zeros(batch.n_positions)
        fixed[1] = 1.0
        assert score(lambda b, j: fixed, batch, 0)[1] == 1.0


def finite_difference(loss_fn, params, batches, l2, eps=1e-6):
    grads = {}
    for name, values in params.items():
        g = np.zeros_like(values)
        flat = values.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            hi, _ = loss_fn(params, batches, l2)
            flat[i] = saved - eps
            lo, _ = loss_fn(params, batches, l2)
            flat[i] = saved
            gflat[i] = (hi - lo) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        diff = np.abs(analytic[name] - numeric[name]).max()
        scale = max(np.abs(analytic[name]).max(initial=0.0),
                    np.abs(numeric[name]).max(initial=0.0), 1e-6)
        worst = max(worst, diff / scale)
    return worst


class TestGradients:
    """Analytic gradients against central finite differences, ten random
    instances per model, all parameters perturbed."""

    def check(self, kind, make_params, rng, tol=1e-3):
        loss_fn = LOSSES[kind]
        for _ in range(10):
            batches = [random_batch(rng), random_batch(rng, n_pairs=2)]
            params = make_params()
            _, analytic = loss_fn(params, batches, l2=1e-5)
            numeric = finite_difference(loss_fn, params, batches, l2=1e-5)
            assert relative_error(analytic, numeric) <= tol

    def test_attn_only(self, rng):
        self.check("attn", lambda: {"w": rng.normal(size=3),
                                    "u": rng.normal(size=3)}, rng)

    def test_attn_words(self, rng):
        self.check("attn_words", lambda: {"W": rng.normal(size=(3, 8)),
                                          "U": rng.normal(size=(3, 8))}, rng)

    def test_distance_words(self, rng):
        din = 2 * 4 + 9 + 2
        self.check("distance_words",
                   lambda: {"W1": rng.normal(size=(din, 8)) * 0.5,
                            "b1": rng.normal(size=8) * 0.1,
                            "w2": rng.normal(size=8) * 0.5}, rng)

    def test_loss_values_match_direct_formula(self, rng):
        batch = random_batch(rng)
        params = {"w": rng.normal(size=3), "u": rng.normal(size=3)}
        loss, _ = attn_only_loss(params, [batch], l2=1e-5)
        probe = AttnOnlyProbe(params["w"], params["u"])
        nll = -np.mean([np.log(score(probe, batch, j)[gold])
                        for j, gold in batch.pairs])
        l2_term = 1e-5 * sum((p * p).sum() for p in params.values())
        np.testing.assert_allclose(loss, nll + l2_term, atol=1e-12)


class TestTraining:
    def test_gold_extract_learned_perfectly(self):
        batches = gold_training_setup()
        probe, losses = train_probe("attn", batches,
                                    TrainConfig(epochs=8, seed=0))
        assert eval_uas(probe, batches) == 1.0
        assert losses[-1] < losses[0]

    def test_seeded_runs_are_identical(self):
        batches = gold_training_setup(n_sentences=8)
        config = TrainConfig(epochs=3, seed=4)
        probe_a, losses_a = train_probe("attn", batches, config)
        probe_b, losses_b = train_probe("attn", batches, config)
        assert losses_a == losses_b
        assert probe_a.w.tobytes() == probe_b.w.tobytes()
        assert probe_a.u.tobytes() == probe_b.u.tobytes()

    def test_full_batch_curve_never_increases(self):
        batches = gold_training_setup(n_sentences=8)
        _, losses = train_probe("attn", batches,
                                TrainConfig(epochs=12, adaptive=False))
        for earlier, later in zip(losses, losses[1:]):
            assert later <= earlier + 1e-12

    def test_zero_epochs_returns_initial_probe(self):
        batches = gold_training_setup(n_sentences=4)
        probe, losses = train_probe("attn", batches, TrainConfig(epochs=0))
        assert losses == []
        assert not probe.w.any() and not probe.u.any()

    def test_distance_model_trains_without_attention(self):
        sents = random_sentences(12, seed=2)
        rng = np.random.default_rng(0)
        table = EmbeddingTable(4, {w: rng.normal(size=4)
                                   for s in sents for w in s.words})
        batches = build_batches(None, sents, embeddings=table)
        probe, losses = train_probe("distance_words", batches,
                                    TrainConfig(epochs=2, seed=0))
        assert probe_kind(probe) == "distance_words"
        assert np.isfinite(losses).all()

    def test_attention_kinds_require_attention(self):
        sents = random_sentences(3, seed=2)
        batches = build_batches(None, sents)
        with pytest.raises(ValueError):
            train_probe("attn", batches, TrainConfig(epochs=1))

    def test_embedding_kinds_require_dim(self):
        batches = gold_training_setup(n_sentences=3)
        with pytest.raises(ValueError):
            train_probe("attn_words", batches, TrainConfig(epochs=1))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            train_probe("mlp", [], TrainConfig())

    def test_no_pairs(self):
        sents = [DepSentence(["root"], [ROOT], ["root"])]
        batches = build_batches(None, sents)
        with pytest.raises(ValueError):
            train_probe("distance_words", batches, TrainConfig(), dim=4)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0).validate()
        with pytest.raises(ValueError):
            TrainConfig(epochs=-1).validate()

    def test_right_branching_hand_count(self):
        sents = [DepSentence(["root", "a", "b"], [ROOT, 2, 0],
                             ["root", "dep", "nsubj"])]
        assert right_branching(sents) == 0.5

    def test_eval_uas_needs_pairs(self):
        batch = SentenceBatch(["a"], None, None, [], np.ones(1, dtype=bool))
        with pytest.raises(ValueError):
            eval_uas(AttnOnlyProbe.zeros(1), [batch])


class TestCheckpoints:
    def test_round_trip_all_kinds(self, rng, tmp_path):
        probes = [AttnOnlyProbe(rng.normal(size=4), rng.normal(size=4)),
                  AttnWordsProbe(rng.normal(size=(2, 6)), rng.normal(size=(2, 6))),
                  DistanceWordsModel.init(3, seed=1)]
        for i, probe in enumerate(probes):
            path = tmp_path / f"probe{i}.bin"
            save_probe(probe, path)
            loaded = load_probe(path)
            assert type(loaded) is type(probe)
            for name in vars(probe):
                original = getattr(probe, name)
                restored = getattr(loaded, name)
                assert original.tobytes() == restored.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "probe.bin"
        path.write_bytes(b"APRB2" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_probe(path)

    def test_truncated_payload(self, rng, tmp_path):
        path = tmp_path / "probe.bin"
        save_probe(AttnOnlyProbe(rng.normal(size=4), rng.normal(size=4)), path)
        data = path.read_bytes()
        path.write_bytes(data[:-12])
        with pytest.raises(CorruptFileError):
            load_probe(path)

    def test_mangled_header(self, rng, tmp_path):
        path = tmp_path / "probe.bin"
        save_probe(AttnOnlyProbe.zeros(2), path)
        data = bytearray(path.read_bytes())
        data[9] ^= 0xFF  # inside the JSON header
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptFileError):
            load_probe(path)

    def test_probe_kind_rejects_strangers(self):
        with pytest.raises(ValueError):
            probe_kind(object())
        with pytest.raises(ValueError):
            save_probe(object(), "/dev/null")
