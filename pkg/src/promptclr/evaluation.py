"""Prediction via argmax over label-word probabilities, the reported metrics
(accuracy, Matthews correlation, binary F1), multi-seed aggregation, and the
hardest-task improvement report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .corpus import Example, FewShotSplit, METRICS
from .encoder import MaskedLMEncoder, label_word_distribution
from .prompting import (TemplateBank, Verbalizer, Vocabulary, assemble_prompt,
                        label_word_ids, sample_demonstrations)


@dataclass(frozen=True)
class RunResult:
    """One task/configuration's scores across seeds."""

    task: str
    config_digest: str
    metric: str
    per_seed: tuple[tuple[int, float], ...]
    mean: float
    std: float

    def __post_init__(self):
        values = [v for _, v in self.per_seed]
        mean, std = aggregate_runs(values)
        if abs(mean - self.mean) > 1e-9 or abs(std - self.std) > 1e-9:
            raise ValueError("mean/std inconsistent with per-seed values")

    @classmethod
    def from_values(cls, task: str, config_digest: str, metric: str,
                    per_seed: dict[int, float]) -> "RunResult":
        mean, std = aggregate_runs(list(per_seed.values()))
        return cls(task=task, config_digest=config_digest, metric=metric,
                   per_seed=tuple(sorted(per_seed.items())), mean=mean, std=std)


def predict(params: MaskedLMEncoder, example: Example, bank: TemplateBank,
            verbalizer: Verbalizer, vocab: Vocabulary,
            demo_pool: Optional[Sequence[Example]] = None, *,
            with_demos: bool = True, rng: Optional[np.random.Generator] = None,
            max_len: int = 128) -> int:
    """Argmax class under the primary template; ties go to the lowest index.

    Demonstrations, when enabled, are drawn from the train pool with the
    caller's rng (one fixed sample per test example).
    """
    if with_demos:
        if demo_pool is None or rng is None:
            raise ValueError("with_demos prediction needs a demo pool and rng")
        demos = sample_demonstrations(example, demo_pool, verbalizer.num_classes, rng)
    else:
        demos = []
    prompt = assemble_prompt(example, bank.primary, demos, verbalizer, vocab,
                             with_demos=with_demos, max_len=max_len)
    ids = label_word_ids(verbalizer, vocab)
    with torch.no_grad():
        hidden = params(torch.as_tensor(prompt.token_ids), train_mode=False)
        probs = label_word_distribution(hidden, prompt, ids, params).tolist()
    best = 0
    for c in range(1, len(probs)):
        if probs[c] > probs[best]:
            best = c
    return best


def predict_split(params: MaskedLMEncoder, split: FewShotSplit, bank: TemplateBank,
                  verbalizer: Verbalizer, vocab: Vocabulary, *,
                  with_demos: bool = True, eval_seed: int = 0,
                  max_len: int = 128) -> list[int]:
    """Predictions for the whole test set, one independent rng per example
    (training streams use step >= 1, so [seed, 0, index] never collides)."""
    preds = []
    for index, example in enumerate(split.test):
        rng = np.random.default_rng(np.random.SeedSequence([eval_seed, 0, index]))
        preds.append(predict(params, example, bank, verbalizer, vocab, split.train,
                             with_demos=with_demos, rng=rng, max_len=max_len))
    return preds


def _binary_counts(preds: Sequence[int], golds: Sequence[int]) -> tuple[int, int, int, int]:
    if any(v not in (0, 1) for v in list(preds) + list(golds)):
        raise ValueError("matthews/f1 need binary labels in {0, 1}")
    tp = sum(1 for p, g in zip(preds, golds) if p == 1 and g == 1)
    tn = sum(1 for p, g in zip(preds, golds) if p == 0 and g == 0)
    fp = sum(1 for p, g in zip(preds, golds) if p == 1 and g == 0)
    fn = sum(1 for p, g in zip(preds, golds) if p == 0 and g == 1)
    return tp, tn, fp, fn


def compute_metric(metric: str, preds: Sequence[int], golds: Sequence[int]) -> float:
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(golds)} golds")
    if not preds:
        raise ValueError("cannot score an empty prediction list")
    if metric == "accuracy":
        return sum(1 for p, g in zip(preds, golds) if p == g) / len(preds)
    tp, tn, fp, fn = _binary_counts(preds, golds)
    if metric == "matthews":
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if denom == 0:
            return 0.0
        return (tp * tn - fp * fn) / math.sqrt(denom)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def aggregate_runs(per_seed: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    if not per_seed:
        raise ValueError("aggregate_runs needs at least one value")
    values = np.asarray(per_seed, dtype=np.float64)
    return float(values.mean()), float(values.std(ddof=0))


def difficulty_report(baseline: dict[str, float],
                      method: dict[str, float]) -> list[tuple[int, float]]:
    """Average improvement on the K hardest tasks, K = 1..|tasks|.

    Hardness is ascending baseline score; equal baselines break ties by task
    name. The final entry is the plain mean improvement over all tasks.
    """
    if set(baseline) != set(method):
        raise ValueError("baseline and method must cover identical tasks")
    if not baseline:
        raise ValueError("difficulty_report needs at least one task")
    order = sorted(baseline, key=lambda task: (baseline[task], task))
    improvements = [method[t] - baseline[t] for t in order]
    report = []
    running = 0.0
    for k, delta in enumerate(improvements, start=1):
        running += delta
        report.append((k, running / k))
    return report
