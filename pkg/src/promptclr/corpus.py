"""Labeled corpora, K-shot train/test splits, and synthetic desk-scale tasks.

Datasets are UTF-8 TSV files, one example per non-empty line:
``text1 [TAB text2 (pair tasks only)] TAB label``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, ParseError

METRICS = ("accuracy", "matthews", "f1")

# Seed convention for the five train-test splits.
DEFAULT_SEEDS = (13, 21, 42, 87, 100)


@dataclass(frozen=True)
class TaskSpec:
    """Static description of a classification task."""

    name: str
    num_classes: int
    is_pair: bool = False
    metric: str = "accuracy"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.metric not in METRICS:
            raise ConfigurationError(f"unknown metric {self.metric!r}, expected one of {METRICS}")
        if self.metric in ("matthews", "f1") and self.num_classes != 2:
            raise ConfigurationError(f"metric {self.metric!r} requires a binary task")


@dataclass(frozen=True)
class Example:
    """One labeled instance: one or two sentences plus a 0-based class index."""

    text1: str
    label: int
    id: int
    text2: Optional[str] = None


@dataclass(frozen=True)
class FewShotSplit:
    """A K-shot training set plus the held-out remainder."""

    train: tuple[Example, ...]
    test: tuple[Example, ...]
    seed: int
    k: int


def load_examples(path: str | Path, spec: TaskSpec) -> list[Example]:
    """Parse a TSV dataset file into Examples, ids assigned by line order."""
    path = Path(path)
    want_fields = 3 if spec.is_pair else 2
    examples: list[Example] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != want_fields:
                raise ParseError(str(path), line_no,
                                 f"expected {want_fields} tab-separated fields, got {len(fields)}")
            text1 = fields[0]
            text2 = fields[1] if spec.is_pair else None
            if not text1.strip():
                raise ParseError(str(path), line_no, "empty text1 field")
            try:
                label = int(fields[-1])
            except ValueError:
                raise ParseError(str(path), line_no, f"non-integer label {fields[-1]!r}") from None
            if not 0 <= label < spec.num_classes:
                raise ParseError(str(path), line_no,
                                 f"label {label} out of range for {spec.num_classes} classes")
            examples.append(Example(text1=text1, text2=text2, label=label, id=len(examples)))
    return examples


def save_examples(path: str | Path, examples: Sequence[Example], spec: TaskSpec) -> None:
    """Write examples back to the TSV dataset format."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            if spec.is_pair:
                fh.write(f"{ex.text1}\t{ex.text2}\t{ex.label}\n")
            else:
                fh.write(f"{ex.text1}\t{ex.label}\n")


def _by_class(examples: Sequence[Example], num_classes: int) -> list[list[Example]]:
    groups: list[list[Example]] = [[] for _ in range(num_classes)]
    for ex in examples:
        groups[ex.label].append(ex)
    return groups


def make_fewshot_splits(examples: Sequence[Example], spec: TaskSpec, k: int,
                        seeds: Sequence[int]) -> list[FewShotSplit]:
    """Sample one K-shot split per seed: exactly k train examples per class,
    everything else into test. Identical seeds yield identical splits."""
    if not seeds:
        raise ValueError("seeds must be non-empty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    groups = _by_class(examples, spec.num_classes)
    for c, members in enumerate(groups):
        if len(members) < k + 1:
            raise InsufficientDataError(
                f"class {c} has {len(members)} examples, need at least {k + 1} for K={k}")
    splits = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        train: list[Example] = []
        train_ids: set[int] = set()
        for members in groups:
            picks = rng.choice(len(members), size=k, replace=False)
            for i in picks:
                train.append(members[int(i)])
                train_ids.add(members[int(i)].id)
        test = tuple(ex for ex in examples if ex.id not in train_ids)
        splits.append(FewShotSplit(train=tuple(train), test=test, seed=seed, k=k))
    return splits


def sample_batch(split: FewShotSplit, batch_size: int,
                 rng: np.random.Generator) -> list[Example]:
    """Draw batch_size training examples without replacement."""
    n = len(split.train)
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds train size {n}")
    idx = rng.choice(n, size=batch_size, replace=False)
    return [split.train[int(i)] for i in idx]


def synthetic_token_sets(num_classes: int, vocab_size: int,
                         signal_tokens_per_class: int = 2) -> tuple[list[list[str]], list[str]]:
    """Allocate disjoint per-class signal tokens and the shared filler pool."""
    num_signal = num_classes * signal_tokens_per_class
    if vocab_size <= num_classes or vocab_size <= num_signal:
        raise ConfigurationError(
            f"vocab_size {vocab_size} too small for {num_classes} classes x "
            f"{signal_tokens_per_class} signal tokens plus fillers")
    words = [f"w{i:04d}" for i in range(vocab_size)]
    signal = [words[c * signal_tokens_per_class:(c + 1) * signal_tokens_per_class]
              for c in range(num_classes)]
    fillers = words[num_signal:]
    return signal, fillers


def generate_synthetic_task(num_classes: int, examples_per_class: int, vocab_size: int,
                            signal_strength: float, rng: np.random.Generator, *,
                            name: str = "synthetic", sentence_len: int = 7,
                            signal_tokens_per_class: int = 2,
                            metric: str = "accuracy") -> tuple[TaskSpec, list[Example]]:
    """Generate a single-sentence classification task where each class owns a
    disjoint set of signal tokens.

    With probability ``signal_strength`` a sentence carries exactly one signal
    token of its class at a random position; the rest is filler drawn from a
    pool disjoint from every signal set, so the Bayes-optimal classifier scores
    at least ``signal_strength``.
    """
    if examples_per_class < 1:
        raise ConfigurationError(f"examples_per_class must be >= 1, got {examples_per_class}")
    if not 0.0 < signal_strength <= 1.0:
        raise ConfigurationError(f"signal_strength must be in (0, 1], got {signal_strength}")
    signal, fillers = synthetic_token_sets(num_classes, vocab_size, signal_tokens_per_class)
    spec = TaskSpec(name=name, num_classes=num_classes, is_pair=False, metric=metric)
    examples: list[Example] = []
    for c in range(num_classes):
        for _ in range(examples_per_class):
            tokens = [fillers[int(i)] for i in rng.integers(len(fillers), size=sentence_len)]
            if rng.random() < signal_strength:
                pos = int(rng.integers(sentence_len))
                tokens[pos] = signal[c][int(rng.integers(len(signal[c])))]
            examples.append(Example(text1=" ".join(tokens), label=c, id=len(examples)))
    return spec, examples
