"""Experiment orchestration: load task inputs, run one training/eval pipeline
per seed, write the per-seed artifacts and the aggregate summary, and compare
configurations side by side.

Output layout: <out>/<task>/<seed>/{checkpoint.bin,checkpoint.json,
trainlog.jsonl,result.tsv} plus <out>/summary.json and the resolved config.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch

from .augment import SynonymLexicon
from .config import RunConfig, save_run_config
from .corpus import (Example, FewShotSplit, TaskSpec, generate_synthetic_task,
                     load_examples, make_fewshot_splits, save_examples,
                     synthetic_token_sets)
from .encoder import init_params, save_checkpoint
from .evaluation import RunResult, compute_metric, difficulty_report, predict_split
from .prompting import (TemplateBank, Verbalizer, Vocabulary, load_template_bank,
                        load_verbalizer)
from .trainer import TrainLog, train


class TaskInputs(NamedTuple):
    task: TaskSpec
    examples: list[Example]
    bank: TemplateBank
    verbalizer: Verbalizer
    vocab: Vocabulary
    lexicon: Optional[SynonymLexicon]


def apply_thread_cap() -> None:
    """Honor PROMPTCLR_THREADS as the intra-op thread cap (1 is always valid)."""
    raw = os.environ.get("PROMPTCLR_THREADS")
    if raw:
        torch.set_num_threads(max(1, int(raw)))


def build_vocabulary(examples: Sequence[Example], bank: TemplateBank,
                     verbalizer: Verbalizer,
                     lexicon: Optional[SynonymLexicon] = None) -> Vocabulary:
    """One vocabulary for the whole task: corpus text, template words, label
    words, and lexicon words, so comparisons across loss modes share ids."""
    texts = []
    for e in examples:
        texts.append(e.text1)
        if e.text2 is not None:
            texts.append(e.text2)
    for template in (bank.primary, *bank.auxiliary):
        texts.append(template.pattern.replace("<S1>", " ").replace("<S2>", " "))
    extra = list(verbalizer.words)
    if lexicon is not None:
        for token, syns in lexicon.entries.items():
            extra.append(token)
            extra.extend(syns)
    return Vocabulary.build(texts, extra_words=extra)


def load_task_inputs(config: RunConfig) -> TaskInputs:
    config.validate_paths()
    task = config.task_spec()
    examples = load_examples(config.dataset, task)
    bank = load_template_bank(config.templates)
    verbalizer = load_verbalizer(config.verbalizer, task.num_classes)
    lexicon = SynonymLexicon.from_file(config.lexicon) if config.lexicon else None
    vocab = build_vocabulary(examples, bank, verbalizer, lexicon)
    return TaskInputs(task, examples, bank, verbalizer, vocab, lexicon)


def run_seed(config: RunConfig, inputs: TaskInputs, split: FewShotSplit,
             out_dir: Path) -> tuple[float, TrainLog]:
    """Train one model on the split, score the test set, write artifacts."""
    params = init_params(config.model_config(len(inputs.vocab)), seed=split.seed)
    params, log = train(params, split, inputs.bank, inputs.verbalizer, inputs.vocab,
                        config.train_config(split.seed), inputs.lexicon)
    preds = predict_split(params, split, inputs.bank, inputs.verbalizer, inputs.vocab,
                          with_demos=config.eval_with_demos, eval_seed=split.seed,
                          max_len=config.max_len)
    golds = [e.label for e in split.test]
    value = compute_metric(inputs.task.metric, preds, golds)

    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.bin", params)
    log.save(out_dir / "trainlog.jsonl", every=config.log_every)
    with open(out_dir / "result.tsv", "w", encoding="utf-8") as fh:
        fh.write("task\tseed\tmetric\tvalue\n")
        fh.write(f"{inputs.task.name}\t{split.seed}\t{inputs.task.metric}\t{value!r}\n")
    return value, log


def run_experiment(config: RunConfig) -> RunResult:
    """The full multi-seed pipeline: split, train, evaluate, aggregate."""
    apply_thread_cap()
    inputs = load_task_inputs(config)
    splits = make_fewshot_splits(inputs.examples, inputs.task, config.k, config.seeds)
    out_root = Path(config.out)
    out_root.mkdir(parents=True, exist_ok=True)
    save_run_config(out_root / "config.resolved.json", config)

    per_seed: dict[int, float] = {}
    for split in splits:
        seed_dir = out_root / inputs.task.name / str(split.seed)
        value, _ = run_seed(config, inputs, split, seed_dir)
        per_seed[split.seed] = value

    result = RunResult.from_values(inputs.task.name, config.digest(),
                                   inputs.task.metric, per_seed)
    summary = {
        "task": result.task,
        "metric": result.metric,
        "config_digest": result.config_digest,
        "per_seed": {str(seed): value for seed, value in result.per_seed},
        "mean": result.mean,
        "std": result.std,
        "std_kind": "population",
    }
    with open(out_root / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


class CompareRow(NamedTuple):
    task: str
    metric: str
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    delta: float


def compare_experiments(baselines: Sequence[RunConfig], methods: Sequence[RunConfig],
                        ) -> tuple[list[CompareRow], Optional[list[tuple[int, float]]]]:
    """Run paired configurations and tabulate baseline vs method per task.

    Pairs must share task and seeds. With more than one task the hardest-task
    improvement report is included.
    """
    if len(baselines) != len(methods) or not baselines:
        raise ValueError("need the same positive number of baseline and method configs")
    rows = []
    base_scores: dict[str, float] = {}
    method_scores: dict[str, float] = {}
    for cfg_a, cfg_b in zip(baselines, methods):
        if cfg_a.task_name != cfg_b.task_name:
            raise ValueError(f"task mismatch: {cfg_a.task_name!r} vs {cfg_b.task_name!r}")
        if tuple(cfg_a.seeds) != tuple(cfg_b.seeds):
            raise ValueError(f"seed mismatch on task {cfg_a.task_name!r}")
        if cfg_a.task_name in base_scores:
            raise ValueError(f"duplicate task {cfg_a.task_name!r} in comparison")
        res_a = run_experiment(cfg_a)
        res_b = run_experiment(cfg_b)
        rows.append(CompareRow(task=res_a.task, metric=res_a.metric,
                               mean_a=res_a.mean, std_a=res_a.std,
                               mean_b=res_b.mean, std_b=res_b.std,
                               delta=res_b.mean - res_a.mean))
        base_scores[res_a.task] = res_a.mean
        method_scores[res_b.task] = res_b.mean
    report = difficulty_report(base_scores, method_scores) if len(rows) > 1 else None
    return rows, report


def format_compare_table(rows: Sequence[CompareRow]) -> str:
    lines = ["task\tmetric\tmean_a\tstd_a\tmean_b\tstd_b\tdelta"]
    for r in rows:
        lines.append(f"{r.task}\t{r.metric}\t{r.mean_a:.4f}\t{r.std_a:.4f}"
                     f"\t{r.mean_b:.4f}\t{r.std_b:.4f}\t{r.delta:+.4f}")
    return "\n".join(lines) + "\n"


def format_difficulty_report(report: Sequence[tuple[int, float]]) -> str:
    lines = ["K\tavg_improvement"]
    for k, delta in report:
        lines.append(f"{k}\t{delta:+.4f}")
    return "\n".join(lines) + "\n"


SYNTHETIC_TEMPLATES = (
    "<S1> It was [MASK] .",
    "<S1> All in all [MASK] .",
    "[MASK] : <S1>",
    "<S1> A really [MASK] one .",
    "<S1> In summary [MASK] .",
)


def _synthetic_lexicon(num_classes: int, vocab_size: int,
                       signal_tokens_per_class: int) -> dict[str, list[str]]:
    """Signal tokens map to same-class signals, fillers to nearby fillers, so
    synonym-based ops never leak label information across classes."""
    signal, fillers = synthetic_token_sets(num_classes, vocab_size, signal_tokens_per_class)
    entries: dict[str, list[str]] = {}
    for class_tokens in signal:
        for token in class_tokens:
            others = [t for t in class_tokens if t != token]
            if others:
                entries[token] = others
    for i, token in enumerate(fillers):
        neighbours = [fillers[(i + off) % len(fillers)] for off in (1, 2, 3)]
        entries[token] = [t for t in neighbours if t != token]
    return entries


def emit_synthetic_task(out_dir: str | Path, *, num_classes: int = 2,
                        examples_per_class: int = 250, vocab_size: int = 200,
                        signal_strength: float = 0.9, seed: int = 0,
                        name: str = "synthetic", sentence_len: int = 7,
                        signal_tokens_per_class: int = 2, k: int = 16,
                        metric: str = "accuracy") -> Path:
    """Write a ready-to-train synthetic task: corpus, templates, verbalizer,
    lexicon, and a config.json wired to them. Returns the config path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    task, examples = generate_synthetic_task(
        num_classes, examples_per_class, vocab_size, signal_strength, rng,
        name=name, sentence_len=sentence_len,
        signal_tokens_per_class=signal_tokens_per_class, metric=metric)
    save_examples(out_dir / "corpus.tsv", examples, task)

    with open(out_dir / "templates.txt", "w", encoding="utf-8") as fh:
        for pattern in SYNTHETIC_TEMPLATES:
            fh.write(pattern + "\n")
    with open(out_dir / "verbalizer.tsv", "w", encoding="utf-8") as fh:
        for c in range(num_classes):
            fh.write(f"{c}\tlabel{c}\n")
    entries = _synthetic_lexicon(num_classes, vocab_size, signal_tokens_per_class)
    with open(out_dir / "lexicon.tsv", "w", encoding="utf-8") as fh:
        for token in sorted(entries):
            fh.write(f"{token}\t{','.join(entries[token])}\n")

    config = RunConfig(task_name=name, num_classes=num_classes, metric=metric,
                       dataset=str(out_dir / "corpus.tsv"),
                       templates=str(out_dir / "templates.txt"),
                       verbalizer=str(out_dir / "verbalizer.tsv"),
                       lexicon=str(out_dir / "lexicon.tsv"),
                       k=k, out=str(out_dir / "runs"))
    config_path = out_dir / "config.json"
    # emit portable relative paths; load_run_config re-anchors them
    payload = config.to_json()
    for key in ("dataset", "templates", "verbalizer", "lexicon", "out"):
        payload[key] = str(Path(payload[key]).relative_to(out_dir)) if payload[key] else None
    payload["out"] = "runs"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return config_path
