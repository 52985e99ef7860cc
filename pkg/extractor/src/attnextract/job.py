"""Extraction job description and errors."""

from dataclasses import dataclass
from pathlib import Path


class ExtractError(Exception):
    """Extraction cannot proceed; message explains why."""

    code = "extract-error"


@dataclass
class ExtractJob:
    """Everything needed to run one extraction.

    model names a checkpoint directory or hub identifier. input_path is a
    text file, one segment per line, or with paired=True two consecutive
    lines per segment framed as a sentence pair. max_length caps tokens per
    segment and must not exceed the model's position limit. random_init
    keeps the pretrained word and position embeddings but re-initializes
    every other weight from the seed.
    """

    model: str
    input_path: str | Path
    max_length: int = 128
    paired: bool = False
    random_init: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.max_length < 4:
            raise ExtractError(f"max_length {self.max_length} leaves no room "
                               "for text between delimiters")

    def check_model_limit(self, model_limit: int) -> None:
        if self.max_length > model_limit:
            raise ExtractError(f"max_length {self.max_length} exceeds the "
                               f"model position limit {model_limit}")
