import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import pytest

VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
         "the", "cat", "sat", "on", "a", "mat", ".", ",",
         "un", "##able", "hel", "##lo", "para", "two", "dog", "ran"]


@pytest.fixture(scope="session")
def bert_dir(tmp_path_factory):
    """Tiny randomly weighted masked-LM checkpoint, fully offline."""
    import torch
    from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

    path = tmp_path_factory.mktemp("tinybert")
    (path / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    BertTokenizerFast(str(path / "vocab.txt")).save_pretrained(str(path))
    torch.manual_seed(7)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=96)
    BertForMaskedLM(config).save_pretrained(str(path))
    return str(path)


@pytest.fixture(scope="session")
def causal_dir(tmp_path_factory):
    """Tiny checkpoint whose architecture has no masked-LM head."""
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel

    path = tmp_path_factory.mktemp("tinycausal")
    torch.manual_seed(7)
    config = GPT2Config(vocab_size=32, n_positions=32, n_embd=16,
                        n_layer=1, n_head=2)
    GPT2LMHeadModel(config).save_pretrained(str(path))
    return str(path)


@pytest.fixture()
def input_file(tmp_path):
    path = tmp_path / "segments.txt"
    path.write_text("the cat sat on a mat .\n"
                    "unable hello , the dog ran .\n")
    return path
