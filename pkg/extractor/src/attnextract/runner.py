"""Model loading, tokenization, attention extraction, gradient importance.

Segments run through the model one at a time so tensors never carry padding
columns. Attention is taken post-softmax with dropout disabled (eval mode).
Everything is deterministic given the job seed.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .formats import (CLS, GRAD_CATEGORIES, NO_WORD, OTHER, PERIOD_COMMA,
                      SEP, SegmentRecord, write_attention_file,
                      write_gradient_report, write_per_head_gradients)
from .job import ExtractError, ExtractJob

ROW_SUM_TOLERANCE = 1e-3
MASK_FRACTION = 0.15
CATEGORY_INDEX = {SEP: 0, PERIOD_COMMA: 1, OTHER: 2, CLS: 2}


@dataclass
class ExtractResult:
    segments: int
    truncated: int  # segments that exceeded max_length and were cut


@dataclass
class GradResult:
    segments: int
    masked_tokens: int


def read_segments(path, paired: bool = False):
    """Non-blank lines of the input file; with paired, consecutive line pairs."""
    lines = [line.strip() for line in
             Path(path).read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        raise ExtractError(f"{path}: no segments in input")
    if not paired:
        return lines
    if len(lines) % 2:
        raise ExtractError(f"{path}: paired input needs an even line count, "
                           f"got {len(lines)}")
    return list(zip(lines[0::2], lines[1::2]))


def load_tokenizer(model: str):
    from transformers import AutoTokenizer
    tokenizer = AutoTokenizer.from_pretrained(model)
    if not tokenizer.is_fast:
        raise ExtractError(f"{model}: tokenizer has no word alignment support")
    return tokenizer


def load_model(model: str, lm_head: bool = False, random_init: bool = False,
               seed: int = 0):
    """Load the checkpoint in eval mode with attention outputs enabled."""
    from transformers import AutoModel, AutoModelForMaskedLM
    loader = AutoModelForMaskedLM if lm_head else AutoModel
    try:
        net = loader.from_pretrained(model, attn_implementation="eager")
    except ValueError as exc:
        if lm_head:
            raise ExtractError(f"{model}: no masked language modeling head "
                               f"({exc})") from exc
        raise
    net.eval()
    if random_init:
        _random_init(net, seed)
    return net


def _random_init(net, seed: int) -> None:
    """Re-initialize every weight except word and position embeddings."""
    keep = {id(net.get_input_embeddings().weight)}
    for name, param in net.named_parameters():
        if "position_embeddings" in name:
            keep.add(id(param))
    std = float(getattr(net.config, "initializer_range", 0.02))
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in net.named_parameters():
            if id(param) in keep:
                continue
            if name.endswith("bias"):
                param.zero_()
            elif "LayerNorm" in name or "layer_norm" in name:
                param.fill_(1.0)
            else:
                param.normal_(0.0, std, generator=generator)


def _encode(tokenizer, item, max_length: int):
    text, pair = (item, None) if isinstance(item, str) else item
    enc = tokenizer(text, pair, return_tensors="pt")
    if enc["input_ids"].shape[1] <= max_length:
        return enc, False
    return tokenizer(text, pair, truncation=True, max_length=max_length,
                     return_tensors="pt"), True


def _segment_metadata(tokenizer, enc):
    """Token strings, special flags, and a global word index per position.

    Word ids restart at each sequence of a pair, so positions are renumbered
    whenever the (sequence, word) key changes. Delimiters get no word index.
    """
    tokens = tokenizer.convert_ids_to_tokens(enc["input_ids"][0])
    word_ids = enc.word_ids(0)
    sequence_ids = enc.sequence_ids(0)
    flags, word_index = [], []
    current_key, current_word, next_word = None, NO_WORD, 0
    for pos, token in enumerate(tokens):
        if word_ids[pos] is None:
            if token == tokenizer.cls_token:
                flags.append(CLS)
            elif token == tokenizer.sep_token:
                flags.append(SEP)
            else:
                flags.append(OTHER)
            word_index.append(NO_WORD)
            continue
        key = (sequence_ids[pos], word_ids[pos])
        if key != current_key:
            current_key, current_word = key, next_word
            next_word += 1
        word_index.append(current_word)
        flags.append(PERIOD_COMMA if token in (".", ",") else OTHER)
    return list(tokens), flags, word_index


def _renormalized(attention: np.ndarray, name: str) -> np.ndarray:
    sums = attention.sum(axis=-1, keepdims=True)
    worst = np.abs(sums - 1.0).max()
    if worst > ROW_SUM_TOLERANCE:
        raise ExtractError(f"{name}: attention row sums off by {worst:.2e}, "
                           f"beyond {ROW_SUM_TOLERANCE}")
    return (attention / sums).astype("<f4")


def extract_attention(job: ExtractJob, out_path) -> ExtractResult:
    """Run the model over every segment and write the attention container."""
    job.validate()
    tokenizer = load_tokenizer(job.model)
    net = load_model(job.model, lm_head=False, random_init=job.random_init,
                     seed=job.seed)
    job.check_model_limit(int(net.config.max_position_embeddings))
    n_layers = int(net.config.num_hidden_layers)
    n_heads = int(net.config.num_attention_heads)
    records, truncated = [], 0
    with torch.no_grad():
        for si, item in enumerate(read_segments(job.input_path, job.paired)):
            enc, was_cut = _encode(tokenizer, item, job.max_length)
            truncated += int(was_cut)
            tokens, flags, word_index = _segment_metadata(tokenizer, enc)
            outputs = net(**enc, output_attentions=True)
            stacked = torch.stack(outputs.attentions, dim=0)[:, 0]
            attention = _renormalized(stacked.numpy(), f"segment {si}")
            records.append(SegmentRecord(f"seg-{si:04d}", tokens, flags,
                                         word_index, attention))
    write_attention_file(records, n_layers, n_heads, out_path)
    return ExtractResult(len(records), truncated)


def _mask_tokens(enc, word_index, tokenizer, rng):
    """Standard masked-language-model corruption over non-special positions.

    15 percent of maskable positions (at least one) become prediction
    targets; of those, 80 percent turn into the mask token, 10 percent into
    a random vocabulary id, 10 percent stay unchanged.
    """
    input_ids = enc["input_ids"].clone()
    labels = torch.full_like(input_ids, -100)
    maskable = [pos for pos, w in enumerate(word_index) if w != NO_WORD]
    if not maskable:
        return input_ids, labels, 0
    n_mask = max(1, round(MASK_FRACTION * len(maskable)))
    chosen = rng.choice(len(maskable), size=n_mask, replace=False)
    for index in sorted(int(c) for c in chosen):
        pos = maskable[index]
        labels[0, pos] = input_ids[0, pos]
        roll = rng.random()
        if roll < 0.8:
            input_ids[0, pos] = tokenizer.mask_token_id
        elif roll < 0.9:
            input_ids[0, pos] = int(rng.integers(0, tokenizer.vocab_size))
    return input_ids, labels, n_mask


def grad_importance(job: ExtractJob, out_path, per_head_path=None) -> GradResult:
    """Mean loss-gradient magnitude per layer and target token category.

    Masks each segment with the pretraining recipe, backpropagates the
    masked-token loss to the attention probabilities, and averages absolute
    gradients over heads, source tokens, and segments for each category of
    target token. per_head_path also dumps the raw per-head means.
    """
    job.validate()
    net = load_model(job.model, lm_head=True, random_init=job.random_init,
                     seed=job.seed)
    tokenizer = load_tokenizer(job.model)
    if tokenizer.mask_token_id is None:
        raise ExtractError(f"{job.model}: tokenizer has no mask token")
    job.check_model_limit(int(net.config.max_position_embeddings))
    n_layers = int(net.config.num_hidden_layers)
    n_heads = int(net.config.num_attention_heads)
    n_categories = len(GRAD_CATEGORIES)
    sums = np.zeros((n_layers, n_categories))
    head_sums = np.zeros((n_layers, n_heads, n_categories))
    weights = np.zeros(n_categories)
    head_weights = np.zeros(n_categories)
    segments, masked_total = 0, 0
    for si, item in enumerate(read_segments(job.input_path, job.paired)):
        enc, _ = _encode(tokenizer, item, job.max_length)
        _, flags, word_index = _segment_metadata(tokenizer, enc)
        rng = np.random.default_rng((job.seed, si))
        input_ids, labels, n_mask = _mask_tokens(enc, word_index, tokenizer, rng)
        if n_mask == 0:
            continue
        inputs = {**enc, "input_ids": input_ids}
        outputs = net(**inputs, labels=labels, output_attentions=True)
        grads = torch.autograd.grad(outputs.loss, outputs.attentions)
        magnitude = torch.stack(grads, dim=0)[:, 0].abs().numpy().astype(np.float64)
        by_target = magnitude.sum(axis=2)  # over source tokens -> [L, H, T]
        t = len(flags)
        for ci in range(n_categories):
            columns = np.array([CATEGORY_INDEX[flag] == ci for flag in flags])
            if not columns.any():
                continue
            picked = by_target[:, :, columns]
            sums[:, ci] += picked.sum(axis=(1, 2))
            head_sums[:, :, ci] += picked.sum(axis=2)
            weights[ci] += columns.sum() * n_heads * t
            head_weights[ci] += columns.sum() * t
        segments += 1
        masked_total += n_mask
    if segments == 0:
        raise ExtractError(f"{job.input_path}: no maskable tokens anywhere")
    safe = np.where(weights > 0, weights, 1.0)
    write_gradient_report(sums / safe, out_path)
    if per_head_path is not None:
        safe_heads = np.where(head_weights > 0, head_weights, 1.0)
        write_per_head_gradients(head_sums / safe_heads, per_head_path)
    return GradResult(segments, masked_total)
