"""Command-line entry point.

Subcommands: train (multi-seed experiment), compare (baseline vs method
tables), oracle-check (property suite), augment-preview (view inspection),
gen-task (synthetic corpus emission). Flags override config-file values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .augment import AUGMENT_OPS, apply_op
from .checks import run_all_checks
from .config import load_run_config
from .errors import PromptClrError
from .prompting import VIEW_STRATEGIES, build_view_pair
from .runner import (apply_thread_cap, compare_experiments, emit_synthetic_task,
                     format_compare_table, format_difficulty_report,
                     load_task_inputs, run_experiment)
from .trainer import LOSS_MODES, STEP_MODES

_REPR_FLAGS = {"mask": "mask_token", "cls": "cls_token"}


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", help="comma-separated seed list, e.g. 13,21,42")
    parser.add_argument("--loss", choices=LOSS_MODES)
    parser.add_argument("--strategy", choices=VIEW_STRATEGIES)
    parser.add_argument("--repr", choices=tuple(_REPR_FLAGS))
    parser.add_argument("--step-mode", choices=STEP_MODES)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--log-every", type=int)


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    if args.seed is not None:
        out["seeds"] = tuple(int(s) for s in args.seed.split(",") if s)
    if args.loss is not None:
        out["loss_mode"] = args.loss
    if args.strategy is not None:
        out["view_strategy"] = args.strategy
    if args.repr is not None:
        out["representation_mode"] = _REPR_FLAGS[args.repr]
    if args.step_mode is not None:
        out["step_mode"] = args.step_mode
    if args.out is not None:
        out["out"] = args.out
    if args.log_every is not None:
        out["log_every"] = args.log_every
    return out


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    result = run_experiment(config)
    print(f"task={result.task} metric={result.metric} digest={result.config_digest[:12]}")
    for seed, value in result.per_seed:
        print(f"  seed {seed}: {value:.4f}")
    print(f"  mean {result.mean:.4f} (population std {result.std:.4f})")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    baselines = [load_run_config(p) for p in args.baseline.split(",") if p]
    methods = [load_run_config(p) for p in args.method.split(",") if p]
    rows, report = compare_experiments(baselines, methods)
    table = format_compare_table(rows)
    print(table, end="")
    if report is not None:
        difficulty = format_difficulty_report(report)
        print(difficulty, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.tsv").write_text(table, encoding="utf-8")
        if report is not None:
            (out / "difficulty.tsv").write_text(
                format_difficulty_report(report), encoding="utf-8")
    return 0


def cmd_oracle_check(_args: argparse.Namespace) -> int:
    results = run_all_checks()
    failed = 0
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        print(f"[{tag}] {r.name}: {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return 0 if failed == 0 else 1


def cmd_augment_preview(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    inputs = load_task_inputs(config)
    print(f"task={inputs.task.name} strategy={config.view_strategy} "
          f"alpha={config.augment_alpha}")
    for slot in range(args.num):
        example = inputs.examples[slot % len(inputs.examples)]
        rng = np.random.default_rng(np.random.SeedSequence([config.seeds[0], 0, slot]))
        pair = build_view_pair(example, inputs.bank, inputs.examples,
                               config.view_strategy, inputs.verbalizer, inputs.vocab,
                               rng, with_demos=config.with_demos, max_len=config.max_len)
        print(f"\n#{slot} label={example.label} input: {example.text1}")
        print(f"  view1: {pair.view1.text}")
        print(f"  view2: {pair.view2.text}")
        for op in AUGMENT_OPS:
            result = apply_op(op, example.text1.split(), config.augment_alpha,
                              inputs.lexicon, rng)
            flag = " (no-op)" if result.noop else ""
            print(f"  {op}{flag}: {' '.join(result.tokens)}")
    return 0


def cmd_gen_task(args: argparse.Namespace) -> int:
    path = emit_synthetic_task(
        args.out, num_classes=args.classes, examples_per_class=args.per_class,
        vocab_size=args.vocab, signal_strength=args.signal, seed=args.seed,
        name=args.name, sentence_len=args.sentence_len,
        signal_tokens_per_class=args.signal_tokens, k=args.k, metric=args.metric)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptclr",
        description="Few-shot prompt training with a contrastive second view")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the multi-seed experiment in a config")
    p_train.add_argument("--config", required=True)
    _add_override_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="baseline vs method table over shared seeds")
    p_cmp.add_argument("--baseline", required=True,
                       help="comma-separated config paths, one per task")
    p_cmp.add_argument("--method", required=True,
                       help="comma-separated config paths, paired with --baseline")
    p_cmp.add_argument("--out", help="directory for compare.tsv / difficulty.tsv")
    p_cmp.set_defaults(func=cmd_compare)

    p_oracle = sub.add_parser("oracle-check", help="run the property suite")
    p_oracle.set_defaults(func=cmd_oracle_check)

    p_prev = sub.add_parser("augment-preview", help="print view pairs and EDA variants")
    p_prev.add_argument("--config", required=True)
    p_prev.add_argument("-n", "--num", type=int, default=5)
    _add_override_flags(p_prev)
    p_prev.set_defaults(func=cmd_augment_preview)

    p_gen = sub.add_parser("gen-task", help="emit a synthetic task directory")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--classes", type=int, default=2)
    p_gen.add_argument("--per-class", type=int, default=250)
    p_gen.add_argument("--vocab", type=int, default=200)
    p_gen.add_argument("--signal", type=float, default=0.9)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--name", default="synthetic")
    p_gen.add_argument("--sentence-len", type=int, default=7)
    p_gen.add_argument("--signal-tokens", type=int, default=2,
                       help="signal tokens per class")
    p_gen.add_argument("--k", type=int, default=16)
    p_gen.add_argument("--metric", default="accuracy")
    p_gen.set_defaults(func=cmd_gen_task)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    apply_thread_cap()
    try:
        return args.func(args)
    except (PromptClrError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
