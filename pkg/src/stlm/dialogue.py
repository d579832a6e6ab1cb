"""Dialogue formatting and the deterministic dataset-preparation pipeline.

The render template is shared with the chat engine so training and serving
formats agree:

    <human>: {text}\\n<bot>: {text}\\n...<|endoftext|>

Dataset files are JSON lines, one dialogue per line:
    {"turns": [{"speaker": "human", "text": "..."}, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidValue, TooFewSamples

SPEAKERS = ("human", "bot")
EOS_LITERAL = "<|endoftext|>"


@dataclass(frozen=True)
class DialogueSample:
    """Alternating (speaker, text) turns, starting with the human."""

    turns: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.turns:
            raise InvalidValue("dialogue must have at least one turn")
        for i, (speaker, text) in enumerate(self.turns):
            expected = SPEAKERS[i % 2]
            if speaker != expected:
                raise InvalidValue(
                    f"turn {i}: expected speaker '{expected}', got '{speaker}'"
                )
            if not isinstance(text, str):
                raise InvalidValue(f"turn {i}: text must be a string")


def render_dialogue(sample: DialogueSample) -> str:
    """Render a sample to the training text format, eos-terminated."""
    lines = [f"<{speaker}>: {text}\n" for speaker, text in sample.turns]
    return "".join(lines) + EOS_LITERAL


@dataclass
class PaddedBatch:
    """Equal-length rows padded at the tail with the eos id."""

    rows: np.ndarray  # int32 [n, max_len]
    true_lengths: tuple[int, ...]
    pad_id: int


def pad_batch(samples: list[list[int]], pad_id: int) -> PaddedBatch:
    """Pad token rows to the longest sample; padding only at the tail."""
    if not samples:
        raise InvalidValue("cannot pad an empty batch")
    lengths = tuple(len(s) for s in samples)
    width = max(lengths)
    rows = np.full((len(samples), width), pad_id, dtype=np.int32)
    for i, s in enumerate(samples):
        rows[i, : len(s)] = s
    return PaddedBatch(rows=rows, true_lengths=lengths, pad_id=pad_id)


def split_dataset(samples: list, train_fraction: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle, then split at round(fraction * n): (train, eval)."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidValue("train_fraction must be in (0, 1)")
    n = len(samples)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(train_fraction * n))
    train = [samples[i] for i in order[:cut]]
    evals = [samples[i] for i in order[cut:]]
    return train, evals


def save_dataset(samples: list[DialogueSample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            record = {
                "turns": [{"speaker": s, "text": t} for s, t in sample.turns]
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_dataset(path) -> list[DialogueSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            turns = tuple((t["speaker"], t["text"]) for t in record["turns"])
            samples.append(DialogueSample(turns=turns))
    return samples
