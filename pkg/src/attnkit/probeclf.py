"""Attention-based probing classifiers for head selection.

Both probes are graph-parser edge scorers: given a dependent word j they put
a softmax distribution over candidate heads i. The attention-only probe uses
one scalar weight per attention head and direction,

    p(i|j) ~ exp( sum_k  w_k a[k,i,j] + u_k a[k,j,i] )

where a[k,i,j] is word-level attention from i to j under head k. The
attention-and-words probe replaces each scalar with a word-sensitive dot
product against the concatenated embeddings of candidate and dependent,

    p(i|j) ~ exp( sum_k  (W[k]. (v_i ++ v_j)) a[k,i,j]
                        + (U[k]. (v_i ++ v_j)) a[k,j,i] ).

Everything here runs in float64 (attention is stored 32-bit and upcast on
read) so the finite-difference gradient checks are meaningful. Training is
single-threaded and bit-deterministic given the seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .corpora import DepSentence, EmbeddingTable, ROOT, align
from .errors import CorruptFileError, FormatError, ValidationError
from .interchange import CLS, ExtractSet
from .wordmap import word_attention_tensor

PROBE_MAGIC = b"APRB1"

# Distance features: one indicator per signed offset in [-4, 4], plus the
# leftward and rightward distances as separate continuous features capped
# at DISTANCE_CAP.
OFFSET_INDICATORS = tuple(range(-4, 5))
DISTANCE_CAP = 40.0
HIDDEN_WIDTH = 64


@dataclass
class AttnOnlyProbe:
    w: np.ndarray  # [n] weight per head, candidate-to-dependent direction
    u: np.ndarray  # [n] weight per head, dependent-to-candidate direction

    @classmethod
    def zeros(cls, n_heads: int) -> "AttnOnlyProbe":
        return cls(np.zeros(n_heads), np.zeros(n_heads))


@dataclass
class AttnWordsProbe:
    W: np.ndarray  # [n, 2d]
    U: np.ndarray  # [n, 2d]

    @classmethod
    def zeros(cls, n_heads: int, dim: int) -> "AttnWordsProbe":
        return cls(np.zeros((n_heads, 2 * dim)), np.zeros((n_heads, 2 * dim)))


@dataclass
class DistanceWordsModel:
    """One-hidden-layer scorer over [v_dep ++ v_cand ++ distance features]."""

    W1: np.ndarray  # [input, hidden]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [hidden]

    @classmethod
    def init(cls, dim: int, seed: int, hidden: int = HIDDEN_WIDTH) -> "DistanceWordsModel":
        rng = np.random.default_rng(seed)
        din = 2 * dim + len(OFFSET_INDICATORS) + 2
        return cls(rng.normal(0.0, din ** -0.5, (din, hidden)),
                   np.zeros(hidden),
                   rng.normal(0.0, hidden ** -0.5, hidden))


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    l2: float = 1e-5
    seed: int = 0
    adaptive: bool = True  # per-parameter adaptive steps; False = monotone decayed-step

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")


@dataclass
class SentenceBatch:
    """One aligned sentence, ready for scoring.

    attn is [n_heads_total, C, C]; positions are words, plus in-place
    delimiter columns when built with root_to_cls. pairs holds (dependent
    position, gold head position); candidates flags legal predictions.
    """

    words: list[str]
    attn: np.ndarray | None
    emb: np.ndarray | None
    pairs: list[tuple[int, int]]
    candidates: np.ndarray
    positions: np.ndarray | None = field(default=None)  # word index per position

    @property
    def n_positions(self) -> int:
        return len(self.candidates)


def build_batches(extract: ExtractSet | None, sentences: list[DepSentence],
                  embeddings: EmbeddingTable | None = None,
                  root_to_cls: bool = False) -> list[SentenceBatch]:
    """Pair segments with sentences and precompute everything scoring needs.

    With root_to_cls, delimiters stay in the matrices, ROOT words are scored
    against the [CLS] column, and [CLS] joins the candidate set; otherwise
    ROOT words are dropped from the pair list entirely.
    """
    if extract is None and root_to_cls:
        raise ValidationError("root_to_cls needs attention segments with [CLS]")
    if extract is not None and len(extract.segments) != len(sentences):
        raise ValidationError(
            f"{len(extract.segments)} segments vs {len(sentences)} sentences")
    batches = []
    for si, sent in enumerate(sentences):
        n = len(sent)
        if extract is not None:
            seg = extract.segments[si]
            align(seg, sent.words)
            swa = word_attention_tensor(seg, keep_delimiters=root_to_cls)
            attn = swa.tensor
            col_word = swa.col_word
            word_col = swa.word_columns()
            col_flag = swa.col_flag
        else:
            attn = None
            col_word = np.arange(n)
            word_col = np.arange(n)
            col_flag = [""] * n
        candidates = col_word >= 0
        if root_to_cls:
            cls_cols = np.array([flag == CLS for flag in col_flag])
            if not cls_cols.any():
                raise ValidationError(f"segment {si} has no [CLS] token to route ROOT to")
            candidates |= cls_cols
            cls_col = int(np.argmax(cls_cols))
        pairs = []
        for dep, gold in enumerate(sent.gold_head):
            if gold == ROOT:
                if root_to_cls:
                    pairs.append((int(word_col[dep]), cls_col))
                continue
            pairs.append((int(word_col[dep]), int(word_col[gold])))
        if embeddings is not None:
            emb = np.zeros((len(col_word), embeddings.dim))
            for pos, wi in enumerate(col_word):
                if wi >= 0:
                    emb[pos] = embeddings.lookup(sent.words[wi])
        else:
            emb = None
        batches.append(SentenceBatch(list(sent.words), attn, emb, pairs,
                                     candidates, col_word))
    return batches


def _masked_softmax(logits: np.ndarray, avoid: int, candidates: np.ndarray) -> np.ndarray:
    scores = np.where(candidates, logits, -np.inf)
    scores[avoid] = -np.inf
    if not np.isfinite(scores).any():
        raise ValueError("no candidate positions to score")
    scores = scores - scores[np.isfinite(scores)].max()
    p = np.where(np.isfinite(scores), np.exp(scores), 0.0)
    return p / p.sum()


def score_attn_only(probe: AttnOnlyProbe, attn: np.ndarray, j: int,
                    candidates: np.ndarray | None = None) -> np.ndarray:
    """Distribution over candidate heads i for dependent j; p[j] = 0."""
    if attn.shape[0] != len(probe.w):
        raise ValueError(f"{attn.shape[0]} heads in attention vs {len(probe.w)} weights")
    if candidates is None:
        candidates = np.ones(attn.shape[1], dtype=bool)
    logits = probe.w @ attn[:, :, j] + probe.u @ attn[:, j, :]
    return _masked_softmax(logits, j, candidates)


def score_attn_words(probe: AttnWordsProbe, attn: np.ndarray, emb: np.ndarray,
                     j: int, candidates: np.ndarray | None = None) -> np.ndarray:
    """Attention-and-words distribution for dependent j.

    emb holds one row per position; delimiter positions use zero vectors.
    """
    if attn.shape[0] != probe.W.shape[0]:
        raise ValueError(f"{attn.shape[0]} heads in attention vs {probe.W.shape[0]} weights")
    feats = _pair_features(emb, j)
    if feats.shape[1] != probe.W.shape[1]:
        raise ValueError(f"feature width {feats.shape[1]} vs probe width {probe.W.shape[1]}")
    if candidates is None:
        candidates = np.ones(attn.shape[1], dtype=bool)
    logits = (np.einsum("ic,kc,ki->i", feats, probe.W, attn[:, :, j])
              + np.einsum("ic,kc,ki->i", feats, probe.U, attn[:, j, :]))
    return _masked_softmax(logits, j, candidates)


def _pair_features(emb: np.ndarray, j: int) -> np.ndarray:
    """Concatenated (candidate, dependent) embeddings for every candidate."""
    return np.concatenate([emb, np.broadcast_to(emb[j], emb.shape)], axis=1)


def distance_features(n_positions: int, j: int) -> np.ndarray:
    """Offset indicators and capped left/right distances of candidates vs j."""
    offsets = np.arange(n_positions) - j
    cols = [np.where(offsets == o, 1.0, 0.0) for o in OFFSET_INDICATORS]
    behind = np.minimum(np.maximum(-offsets, 0), DISTANCE_CAP)
    ahead = np.minimum(np.maximum(offsets, 0), DISTANCE_CAP)
    return np.stack(cols + [behind.astype(float), ahead.astype(float)], axis=1)


def score_distance_words(model: DistanceWordsModel, emb: np.ndarray, j: int,
                         candidates: np.ndarray | None = None) -> np.ndarray:
    if candidates is None:
        candidates = np.ones(len(emb), dtype=bool)
    x = np.concatenate([_pair_features(emb, j), distance_features(len(emb), j)], axis=1)
    hidden = np.tanh(x @ model.W1 + model.b1)
    return _masked_softmax(hidden @ model.w2, j, candidates)


#
# Losses and analytic gradients. Each returns (loss, grads) where loss is the
# mean negative log-likelihood over the batch pairs plus l2 * sum(theta^2),
# and grads maps parameter names to arrays of matching shape.
#

def _l2_term(params: dict[str, np.ndarray], l2: float) -> float:
    return l2 * sum(float((p * p).sum()) for p in params.values())


def attn_only_loss(params: dict[str, np.ndarray], batches: list[SentenceBatch],
                   l2: float) -> tuple[float, dict[str, np.ndarray]]:
    probe = AttnOnlyProbe(params["w"], params["u"])
    loss = 0.0
    gw, gu = np.zeros_like(probe.w), np.zeros_like(probe.u)
    count = 0
    for batch in batches:
        for j, gold in batch.pairs:
            p = score_attn_only(probe, batch.attn, j, batch.candidates)
            loss -= np.log(p[gold])
            d = p.copy()
            d[gold] -= 1.0
            gw += batch.attn[:, :, j] @ d
            gu += batch.attn[:, j, :] @ d
            count += 1
    loss = loss / count + _l2_term(params, l2)
    return loss, {"w": gw / count + 2 * l2 * probe.w,
                  "u": gu / count + 2 * l2 * probe.u}


def attn_words_loss(params: dict[str, np.ndarray], batches: list[SentenceBatch],
                    l2: float) -> tuple[float, dict[str, np.ndarray]]:
    probe = AttnWordsProbe(params["W"], params["U"])
    loss = 0.0
    gW, gU = np.zeros_like(probe.W), np.zeros_like(probe.U)
    count = 0
    for batch in batches:
        for j, gold in batch.pairs:
            p = score_attn_words(probe, batch.attn, batch.emb, j, batch.candidates)
            loss -= np.log(p[gold])
            d = p.copy()
            d[gold] -= 1.0
            feats = _pair_features(batch.emb, j)
            gW += (batch.attn[:, :, j] * d) @ feats
            gU += (batch.attn[:, j, :] * d) @ feats
            count += 1
    loss = loss / count + _l2_term(params, l2)
    return loss, {"W": gW / count + 2 * l2 * probe.W,
                  "U": gU / count + 2 * l2 * probe.U}


def distance_words_loss(params: dict[str, np.ndarray], batches: list[SentenceBatch],
                        l2: float) -> tuple[float, dict[str, np.ndarray]]:
    model = DistanceWordsModel(params["W1"], params["b1"], params["w2"])
    loss = 0.0
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    count = 0
    for batch in batches:
        for j, gold in batch.pairs:
            x = np.concatenate([_pair_features(batch.emb, j),
                                distance_features(batch.n_positions, j)], axis=1)
            hidden = np.tanh(x @ model.W1 + model.b1)
            p = _masked_softmax(hidden @ model.w2, j, batch.candidates)
            loss -= np.log(p[gold])
            d = p.copy()
            d[gold] -= 1.0
            grads["w2"] += hidden.T @ d
            dpre = np.outer(d, model.w2) * (1.0 - hidden * hidden)
            grads["W1"] += x.T @ dpre
            grads["b1"] += dpre.sum(axis=0)
            count += 1
    loss = loss / count + _l2_term(params, l2)
    for name in grads:
        grads[name] = grads[name] / count + 2 * l2 * params[name]
    return loss, grads


LOSSES = {
    "attn": attn_only_loss,
    "attn_words": attn_words_loss,
    "distance_words": distance_words_loss,
}


def _check_finite(loss: float, epoch: int, params: dict[str, np.ndarray]) -> None:
    if not np.isfinite(loss):
        norms = {k: float(np.abs(v).max(initial=0.0)) for k, v in params.items()}
        raise RuntimeError(f"non-finite loss {loss} at epoch {epoch}; "
                           f"max |param| = {norms}")


def _train(params: dict[str, np.ndarray], loss_fn, batches: list[SentenceBatch],
           config: TrainConfig) -> list[float]:
    """Shared optimizer loop; mutates params, returns per-epoch mean loss."""
    config.validate()
    if not any(batch.pairs for batch in batches):
        raise ValueError("no training pairs")
    losses: list[float] = []
    if config.adaptive:
        accum = {k: np.zeros_like(v) for k, v in params.items()}
        rng = np.random.default_rng(config.seed)
        for epoch in range(config.epochs):
            order = rng.permutation(len(batches))
            for bi in order:
                batch = batches[bi]
                if not batch.pairs:
                    continue
                loss, grads = loss_fn(params, [batch], config.l2)
                _check_finite(loss, epoch, params)
                for name, g in grads.items():
                    accum[name] += g * g
                    params[name] -= config.learning_rate * g / (np.sqrt(accum[name]) + 1e-8)
            epoch_loss, _ = loss_fn(params, batches, config.l2)
            _check_finite(epoch_loss, epoch, params)
            losses.append(float(epoch_loss))
    else:
        # Decayed-step full-batch descent: a trial step that fails to improve
        # the loss is halved until it does, so the curve never increases.
        step = config.learning_rate
        current, grads = loss_fn(params, batches, config.l2)
        _check_finite(current, 0, params)
        for epoch in range(config.epochs):
            accepted = False
            for _ in range(60):
                trial = {k: v - step * grads[k] for k, v in params.items()}
                trial_loss, trial_grads = loss_fn(trial, batches, config.l2)
                _check_finite(trial_loss, epoch, trial)
                if trial_loss <= current:
                    for k in params:
                        params[k][...] = trial[k]
                    current, grads = trial_loss, trial_grads
                    step *= 1.2
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                pass  # gradient step cannot improve at float precision; hold position
            losses.append(float(current))
    return losses


def train_probe(kind: str, batches: list[SentenceBatch], config: TrainConfig,
                dim: int | None = None):
    """Train a probe of the given kind; returns (probe, per-epoch losses).

    kind: "attn", "attn_words" or "distance_words". dim (embedding width) is
    required for the embedding-based kinds; it is read off the batches when
    they carry embeddings.
    """
    if kind not in LOSSES:
        raise ValueError(f"unknown probe kind {kind!r}")
    if kind != "distance_words":
        with_attn = [b for b in batches if b.attn is not None]
        if not with_attn:
            raise ValueError(f"probe kind {kind!r} needs attention tensors")
        n = with_attn[0].attn.shape[0]
    if kind in ("attn_words", "distance_words"):
        if dim is None:
            with_emb = [b for b in batches if b.emb is not None]
            if not with_emb:
                raise ValueError(f"probe kind {kind!r} needs embeddings")
            dim = with_emb[0].emb.shape[1]
    if kind == "attn":
        params = {"w": np.zeros(n), "u": np.zeros(n)}
        build = lambda p: AttnOnlyProbe(p["w"], p["u"])
    elif kind == "attn_words":
        params = {"W": np.zeros((n, 2 * dim)), "U": np.zeros((n, 2 * dim))}
        build = lambda p: AttnWordsProbe(p["W"], p["U"])
    else:
        model = DistanceWordsModel.init(dim, config.seed)
        params = {"W1": model.W1, "b1": model.b1, "w2": model.w2}
        build = lambda p: DistanceWordsModel(p["W1"], p["b1"], p["w2"])
    losses = _train(params, LOSSES[kind], batches, config)
    return build(params), losses


def score(probe, batch: SentenceBatch, j: int) -> np.ndarray:
    """Dispatch scoring on probe type."""
    if isinstance(probe, AttnOnlyProbe):
        return score_attn_only(probe, batch.attn, j, batch.candidates)
    if isinstance(probe, AttnWordsProbe):
        return score_attn_words(probe, batch.attn, batch.emb, j, batch.candidates)
    if isinstance(probe, DistanceWordsModel):
        return score_distance_words(probe, batch.emb, j, batch.candidates)
    return probe(batch, j)  # custom scorer


def eval_uas(probe, batches: list[SentenceBatch]) -> float:
    """Greedy per-word head selection accuracy over all batch pairs."""
    correct = total = 0
    for batch in batches:
        for j, gold in batch.pairs:
            p = score(probe, batch, j)
            correct += int(int(np.argmax(p)) == gold)
            total += 1
    if total == 0:
        raise ValueError("no evaluable pairs")
    return correct / total


def right_branching(sentences: list[DepSentence]) -> float:
    """UAS of always predicting the next word as the head."""
    correct = total = 0
    for sent in sentences:
        for dep, gold in enumerate(sent.gold_head):
            if gold == ROOT:
                continue
            correct += int(gold == dep + 1)
            total += 1
    if total == 0:
        raise ValueError("no evaluable pairs")
    return correct / total


#
# Checkpoints: magic, u32 JSON header length, JSON header, float64 payload.
#

_KINDS = {AttnOnlyProbe: "attn", AttnWordsProbe: "attn_words",
          DistanceWordsModel: "distance_words"}
_FIELDS = {"attn": ("w", "u"), "attn_words": ("W", "U"),
           "distance_words": ("W1", "b1", "w2")}


def probe_kind(probe) -> str:
    kind = _KINDS.get(type(probe))
    if kind is None:
        raise ValueError(f"not a known probe type: {type(probe).__name__}")
    return kind


def save_probe(probe, path) -> None:
    kind = _KINDS.get(type(probe))
    if kind is None:
        raise ValueError(f"cannot checkpoint {type(probe).__name__}")
    arrays = [np.asarray(getattr(probe, name), dtype="<f8") for name in _FIELDS[kind]]
    header = json.dumps({"kind": kind, "shapes": [list(a.shape) for a in arrays],
                         "version": 1}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PROBE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())


def load_probe(path):
    with open(path, "rb") as fh:
        if fh.read(len(PROBE_MAGIC)) != PROBE_MAGIC:
            raise FormatError(f"{path}: not a probe checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen))
            kind = header["kind"]
            shapes = [tuple(s) for s in header["shapes"]]
            names = _FIELDS[kind]
        except (ValueError, KeyError) as exc:
            raise CorruptFileError(f"{path}: bad checkpoint header ({exc})") from exc
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CorruptFileError(f"{path}: truncated checkpoint payload")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    cls = {v: k for k, v in _KINDS.items()}[kind]
    return cls(**dict(zip(names, arrays)))
