"""Two-pass training loop.

Each iteration in sequential mode: forward view 1, MLM step, then forward
view 2 under the updated weights and take a contrastive step through both
feature branches (view 1 features retained from the first forward, which was
built under the pre-step weights; that reuse is deliberate and matches the
one-extra-forward cost accounting). Joint mode folds both losses into one
backward and one step.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .augment import AUGMENT_OPS, SynonymLexicon, build_view_pair_augmented
from .corpus import Example, FewShotSplit, sample_batch
from .encoder import (EXTRACT_MODES, MaskedLMEncoder, batch_label_logits,
                      batch_mask_states, pad_batch)
from .errors import ConfigurationError, DivergenceError
from .losses import ContrastiveBatch, mlm_loss, simclr_loss, supcon_loss
from .prompting import (VIEW_STRATEGIES, PromptedText, TemplateBank, Verbalizer,
                        Vocabulary, ViewPair, assemble_prompt, build_view_pair,
                        label_word_ids, sample_demonstrations)

LOSS_MODES = ("supcon", "simclr", "none")
STEP_MODES = ("sequential", "joint")


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int = 1000
    batch_size: int = 16
    lr_mlm: float = 3e-4
    lr_supcon: float = 3e-4
    loss_mode: str = "supcon"
    step_mode: str = "sequential"
    view_strategy: str = "demo_and_temp"
    representation_mode: str = "mask_token"
    # 0.5 is calibrated for the 64-dim toy encoder; sharper values (0.1 and
    # below) over-separate the tiny feature space and hurt few-shot accuracy
    temperature: float = 0.5
    seed: int = 13
    with_demos: bool = True
    augment_op: Optional[str] = None
    augment_alpha: float = 0.1
    supcon_weight: float = 1.0
    max_len: int = 128

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(f"loss_mode must be one of {LOSS_MODES}")
        if self.step_mode not in STEP_MODES:
            raise ConfigurationError(f"step_mode must be one of {STEP_MODES}")
        if self.view_strategy not in VIEW_STRATEGIES:
            raise ConfigurationError(f"view_strategy must be one of {VIEW_STRATEGIES}")
        if self.representation_mode not in EXTRACT_MODES:
            raise ConfigurationError(f"representation_mode must be one of {EXTRACT_MODES}")
        if self.augment_op is not None and self.augment_op not in AUGMENT_OPS:
            raise ConfigurationError(f"augment_op must be one of {AUGMENT_OPS} or null")
        if self.max_steps < 1 or self.batch_size < 1:
            raise ConfigurationError("max_steps and batch_size must be at least 1")
        if self.lr_mlm <= 0:
            raise ConfigurationError("lr_mlm must be positive")
        # lr_supcon=0 is allowed so the contrastive branch can be priced and
        # ablated without changing the pass structure
        if self.lr_supcon < 0:
            raise ConfigurationError("lr_supcon must be non-negative")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.loss_mode != "none" and self.batch_size < 2:
            raise ConfigurationError("contrastive modes need batch_size >= 2")
        if not 0.0 <= self.augment_alpha <= 1.0:
            raise ConfigurationError("augment_alpha must be in [0, 1]")


@dataclass(frozen=True)
class StepRecord:
    step: int
    mlm_loss: float
    contrastive_loss: Optional[float]
    forward_count: int
    backward_count: int
    wall_time: float

    def to_json(self) -> dict:
        out = {"step": self.step, "mlm_loss": self.mlm_loss,
               "forward_count": self.forward_count,
               "backward_count": self.backward_count, "wall_time": self.wall_time}
        if self.contrastive_loss is not None:
            out["contrastive_loss"] = self.contrastive_loss
        return out


@dataclass
class TrainLog:
    records: list[StepRecord] = field(default_factory=list)

    def append(self, record: StepRecord) -> None:
        expected = self.records[-1].step + 1 if self.records else 1
        if record.step != expected:
            raise ValueError(f"non-monotone step index {record.step}, expected {expected}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def mlm_losses(self) -> list[float]:
        return [r.mlm_loss for r in self.records]

    def contrastive_losses(self) -> list[Optional[float]]:
        return [r.contrastive_loss for r in self.records]

    def save(self, path: str | Path, every: int = 1) -> None:
        """JSON-lines, one record per line; ``every`` thins emission but the
        final step is always written."""
        last = self.records[-1].step if self.records else 0
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                if r.step % every == 0 or r.step == last:
                    fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainLog":
        log = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                log.records.append(StepRecord(
                    step=rec["step"], mlm_loss=rec["mlm_loss"],
                    contrastive_loss=rec.get("contrastive_loss"),
                    forward_count=rec["forward_count"],
                    backward_count=rec["backward_count"],
                    wall_time=rec["wall_time"]))
        return log


class Adam(object):
    """Hand-rolled Adam so both passes of an iteration share one moment state.

    step(lr=0) is a complete no-op (no moment or count updates), which makes
    a zero-rate contrastive branch bit-identical to never stepping at all.
    Updates go through p.data, which does not bump the autograd version
    counter; the retained view-1 graph therefore stays backpropable after the
    MLM step, as the two-pass schedule requires.
    """

    def __init__(self, params: Iterable[torch.Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]
        self.counts = [0] * len(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        if lr == 0.0:
            return
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not bool(torch.isfinite(g).all()):
                raise ValueError("non-finite gradient")
            self.counts[i] += 1
            t = self.counts[i]
            self.m[i].mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            self.v[i].mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.data.add_(-lr * m_hat / (v_hat.sqrt() + self.eps))


def optimizer_step(opt: Adam, lr: float) -> None:
    """Apply one adaptive update from the gradients currently on the params."""
    opt.step(lr)


def _slot_rng(seed: int, step: int, slot: int) -> np.random.Generator:
    # one independent stream per (seed, step, example slot); the batch sampler
    # uses slot 0 and examples use 1..B
    return np.random.default_rng(np.random.SeedSequence([seed, step, slot]))


def build_view1(example: Example, bank: TemplateBank, demo_pool: Sequence[Example],
                verbalizer: Verbalizer, vocab: Vocabulary, rng: np.random.Generator,
                *, with_demos: bool = True, max_len: int = 128) -> PromptedText:
    """The primary-template prompt exactly as build_view_pair would produce it
    (same rng split), so MLM-only runs see identical inputs."""
    rng1, _ = rng.spawn(2)
    demos = (sample_demonstrations(example, demo_pool, verbalizer.num_classes, rng1)
             if with_demos else [])
    return assemble_prompt(example, bank.primary, demos, verbalizer, vocab,
                           with_demos=with_demos, max_len=max_len)


def _build_views(batch: Sequence[Example], bank: TemplateBank,
                 demo_pool: Sequence[Example], verbalizer: Verbalizer,
                 vocab: Vocabulary, config: TrainConfig, step: int,
                 lexicon: Optional[SynonymLexicon]) -> list[ViewPair]:
    pairs = []
    for slot, example in enumerate(batch):
        rng = _slot_rng(config.seed, step, 1 + slot)
        if config.loss_mode == "none":
            view1 = build_view1(example, bank, demo_pool, verbalizer, vocab, rng,
                                with_demos=config.with_demos, max_len=config.max_len)
            pairs.append(ViewPair(view1=view1, view2=view1, label=example.label))
        elif config.augment_op is not None:
            pairs.append(build_view_pair_augmented(
                example, bank, demo_pool, config.augment_op, config.augment_alpha,
                lexicon, verbalizer, vocab, rng,
                with_demos=config.with_demos, max_len=config.max_len))
        else:
            pairs.append(build_view_pair(
                example, bank, demo_pool, config.view_strategy, verbalizer, vocab,
                rng, with_demos=config.with_demos, max_len=config.max_len))
    return pairs


def _features(hidden: torch.Tensor, prompts: Sequence[PromptedText],
              mask_pos: torch.Tensor, mode: str) -> torch.Tensor:
    if mode == "mask_token":
        states = batch_mask_states(hidden, mask_pos)
    else:
        states = hidden[:, 0, :]
    return F.normalize(states, dim=-1)


def _check_finite(value: torch.Tensor, step: int, name: str) -> None:
    if not bool(torch.isfinite(value.detach()).all()):
        raise DivergenceError(step, f"{name} became non-finite")


def train_iteration(params: MaskedLMEncoder, batch: Sequence[Example],
                    bank: TemplateBank, verbalizer: Verbalizer, vocab: Vocabulary,
                    label_ids: Sequence[int], config: TrainConfig, opt: Adam,
                    step: int, demo_pool: Sequence[Example],
                    lexicon: Optional[SynonymLexicon] = None) -> StepRecord:
    start = time.perf_counter()
    pairs = _build_views(batch, bank, demo_pool, verbalizer, vocab, config, step, lexicon)
    golds = torch.as_tensor([p.label for p in pairs], dtype=torch.long)
    forwards = 0
    backwards = 0
    contrastive_value: Optional[float] = None
    loss_fn = supcon_loss if config.loss_mode == "supcon" else simclr_loss

    if config.step_mode == "sequential" or config.loss_mode == "none":
        ids1, pos1 = pad_batch([p.view1 for p in pairs])
        hidden1 = params(ids1, train_mode=True)
        forwards += 1
        mask_h1 = batch_mask_states(hidden1, pos1)
        probs = batch_label_logits(mask_h1, label_ids, params).softmax(dim=-1)
        loss_mlm = mlm_loss(probs, golds)
        _check_finite(loss_mlm, step, "mlm loss")
        opt.zero_grad()
        loss_mlm.backward(retain_graph=config.loss_mode != "none")
        backwards += 1
        try:
            opt.step(config.lr_mlm)
        except ValueError as err:
            raise DivergenceError(step, str(err)) from err

        if config.loss_mode != "none":
            ids2, pos2 = pad_batch([p.view2 for p in pairs])
            hidden2 = params(ids2, train_mode=True)
            forwards += 1
            z1 = _features(hidden1, [p.view1 for p in pairs], pos1,
                           config.representation_mode)
            z2 = _features(hidden2, [p.view2 for p in pairs], pos2,
                           config.representation_mode)
            cbatch = ContrastiveBatch.from_views(z1, z2, golds, config.temperature)
            result = loss_fn(cbatch)
            _check_finite(result.value, step, "contrastive loss")
            contrastive_value = float(result.value.detach())
            opt.zero_grad()
            result.value.backward()
            backwards += 1
            try:
                opt.step(config.lr_supcon)
            except ValueError as err:
                raise DivergenceError(step, str(err)) from err
    else:
        # joint mode: one forward over both views, one backward of the sum
        view1s = [p.view1 for p in pairs]
        view2s = [p.view2 for p in pairs]
        n = len(pairs)
        width = max(len(p.token_ids) for p in view1s + view2s)
        ids, pos = pad_batch(view1s + view2s, pad_to=width)
        hidden = params(ids, train_mode=True)
        forwards += 1
        mask_h1 = batch_mask_states(hidden[:n], pos[:n])
        probs = batch_label_logits(mask_h1, label_ids, params).softmax(dim=-1)
        loss_mlm = mlm_loss(probs, golds)
        _check_finite(loss_mlm, step, "mlm loss")
        z1 = _features(hidden[:n], view1s, pos[:n], config.representation_mode)
        z2 = _features(hidden[n:], view2s, pos[n:], config.representation_mode)
        cbatch = ContrastiveBatch.from_views(z1, z2, golds, config.temperature)
        result = loss_fn(cbatch)
        _check_finite(result.value, step, "contrastive loss")
        contrastive_value = float(result.value.detach())
        total = loss_mlm + config.supcon_weight * result.value
        opt.zero_grad()
        total.backward()
        backwards += 1
        try:
            opt.step(config.lr_mlm)
        except ValueError as err:
            raise DivergenceError(step, str(err)) from err

    return StepRecord(step=step, mlm_loss=float(loss_mlm.detach()),
                      contrastive_loss=contrastive_value,
                      forward_count=forwards, backward_count=backwards,
                      wall_time=time.perf_counter() - start)


def train(params: MaskedLMEncoder, split: FewShotSplit, bank: TemplateBank,
          verbalizer: Verbalizer, vocab: Vocabulary, config: TrainConfig,
          lexicon: Optional[SynonymLexicon] = None) -> tuple[MaskedLMEncoder, TrainLog]:
    """Run max_steps iterations over batches sampled from the train split.

    Deterministic per (seed, config, corpus). Raises DivergenceError with the
    step index if any loss or gradient goes non-finite.
    """
    if not split.train:
        raise ValueError("train split is empty")
    if config.augment_op in ("sr", "ri", "eda") and lexicon is None:
        raise ConfigurationError(f"augment_op {config.augment_op!r} needs a lexicon")
    label_ids = label_word_ids(verbalizer, vocab)
    torch.manual_seed(config.seed)
    opt = Adam(params.parameters())
    log = TrainLog()
    for step in range(1, config.max_steps + 1):
        batch = sample_batch(split, config.batch_size, _slot_rng(config.seed, step, 0))
        record = train_iteration(params, batch, bank, verbalizer, vocab, label_ids,
                                 config, opt, step, split.train, lexicon)
        log.append(record)
    return params, log
