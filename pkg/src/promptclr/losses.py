"""Training losses: label-word MLM cross-entropy, supervised contrastive,
the SimCLR (instance-level) variant, and a deliberately slow pure-Python
brute-force oracle used to test the vectorized paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import torch


class ContrastiveLoss(NamedTuple):
    value: Union[torch.Tensor, float]
    degenerate: bool


@dataclass
class ContrastiveBatch:
    """2N features (two views per anchor, interleaved), labels and anchor ids
    expanded to 2N, and the softmax temperature."""

    features: torch.Tensor
    labels: torch.Tensor
    view_of: torch.Tensor
    temperature: float = 0.1

    def __post_init__(self):
        self.labels = torch.as_tensor(self.labels, dtype=torch.long)
        self.view_of = torch.as_tensor(self.view_of, dtype=torch.long)
        if self.features.dim() != 2:
            raise ValueError("features must be a 2-D matrix of row vectors")
        m = self.features.shape[0]
        if self.labels.numel() != m or self.view_of.numel() != m:
            raise ValueError("labels and view_of must have one entry per feature row")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        norms = self.features.detach().norm(dim=1)
        if not torch.allclose(norms, torch.ones_like(norms), atol=1e-4):
            raise ValueError("features must be unit-norm")
        _, counts = self.view_of.unique(return_counts=True)
        if not bool((counts == 2).all()):
            raise ValueError("every element needs exactly one partner view")

    @classmethod
    def from_views(cls, view1: torch.Tensor, view2: torch.Tensor,
                   labels: Sequence[int], temperature: float = 0.1) -> "ContrastiveBatch":
        """Interleave per-anchor view pairs: rows (2k, 2k+1) belong to anchor k."""
        if view1.shape != view2.shape:
            raise ValueError("view feature matrices must have equal shapes")
        n, d = view1.shape
        feats = torch.stack([view1, view2], dim=1).reshape(2 * n, d)
        lab = torch.as_tensor(labels, dtype=torch.long).repeat_interleave(2)
        anchors = torch.arange(n).repeat_interleave(2)
        return cls(features=feats, labels=lab, view_of=anchors, temperature=temperature)


def mlm_loss(probs: torch.Tensor, golds) -> torch.Tensor:
    """Mean over the batch of -log p(gold). probs: [B, C] rows summing to 1."""
    golds = torch.as_tensor(golds, dtype=torch.long)
    if probs.dim() != 2 or golds.numel() != probs.shape[0]:
        raise ValueError("need one gold class index per probability row")
    sums = probs.detach().sum(dim=1)
    if not torch.allclose(sums, torch.ones_like(sums), atol=1e-4):
        raise ValueError("each probability row must sum to 1")
    if int(golds.min()) < 0 or int(golds.max()) >= probs.shape[1]:
        raise ValueError("gold class index out of range")
    return -probs[torch.arange(probs.shape[0]), golds].log().mean()


def _positive_mask(batch: ContrastiveBatch, positives: str) -> torch.Tensor:
    m = batch.features.shape[0]
    eye = torch.eye(m, dtype=torch.bool)
    if positives == "label":
        same = batch.labels[:, None] == batch.labels[None, :]
    elif positives == "partner":
        same = batch.view_of[:, None] == batch.view_of[None, :]
    else:
        raise ValueError(f"unknown positive set {positives!r}")
    return same & ~eye


def _contrastive(batch: ContrastiveBatch, positives: str) -> ContrastiveLoss:
    m = batch.features.shape[0]
    if m < 2:
        raise ValueError("contrastive loss needs at least 2 elements")
    eye = torch.eye(m, dtype=torch.bool)
    sim = batch.features @ batch.features.T / batch.temperature
    # row-max shift (over a != i, detached) keeps exp in range without moving
    # the value or gradient of the plain formula
    shift = sim.masked_fill(eye, float("-inf")).max(dim=1, keepdim=True).values.detach()
    shifted = sim - shift
    log_denom = shifted.exp().masked_fill(eye, 0.0).sum(dim=1).log()
    log_prob = shifted - log_denom[:, None]
    pos = _positive_mask(batch, positives)
    counts = pos.sum(dim=1)
    nonempty = counts > 0
    if not bool(nonempty.any()):
        return ContrastiveLoss(batch.features.new_zeros(()), True)
    mean_log_prob = (log_prob * pos).sum(dim=1)[nonempty] / counts[nonempty]
    return ContrastiveLoss(-mean_log_prob.mean(), False)


def supcon_loss(batch: ContrastiveBatch) -> ContrastiveLoss:
    """Supervised contrastive loss.

    With I the 2N elements, A(i) = I minus {i}, and P(i) the same-label
    elements of A(i): mean over anchors with non-empty P(i) of
    (-1/|P(i)|) sum_{p in P(i)} log(exp(z_i.z_p/t) / sum_{a in A(i)} exp(z_i.z_a/t)).
    Anchors without positives contribute nothing; if none has a positive the
    loss is 0 and the degenerate flag is set.
    """
    return _contrastive(batch, "label")


def simclr_loss(batch: ContrastiveBatch) -> ContrastiveLoss:
    """Instance-level variant: P(i) is just the partner view, labels ignored."""
    return _contrastive(batch, "partner")


def per_anchor_logprobs(batch: ContrastiveBatch, positives: str = "label") -> torch.Tensor:
    """Per-anchor mean log-probability terms (one entry per non-empty anchor),
    used for temperature-sharpening diagnostics."""
    m = batch.features.shape[0]
    eye = torch.eye(m, dtype=torch.bool)
    sim = batch.features @ batch.features.T / batch.temperature
    shift = sim.masked_fill(eye, float("-inf")).max(dim=1, keepdim=True).values.detach()
    shifted = sim - shift
    log_denom = shifted.exp().masked_fill(eye, 0.0).sum(dim=1).log()
    log_prob = shifted - log_denom[:, None]
    pos = _positive_mask(batch, positives)
    counts = pos.sum(dim=1)
    nonempty = counts > 0
    return (log_prob * pos).sum(dim=1)[nonempty] / counts[nonempty]


def contrastive_bruteforce(batch: ContrastiveBatch, positives: str = "label") -> ContrastiveLoss:
    """Reference computation by explicit nested loops in float64.

    No vectorization and no log-sum-exp shift on purpose: this is the
    independent oracle the fast path is tested against.
    """
    feats = [[float(v) for v in row] for row in batch.features.detach().double().tolist()]
    labels = [int(v) for v in batch.labels.tolist()]
    anchors_of = [int(v) for v in batch.view_of.tolist()]
    tau = float(batch.temperature)
    m = len(feats)
    if m < 2:
        raise ValueError("contrastive loss needs at least 2 elements")

    def dot(u, v):
        return sum(a * b for a, b in zip(u, v))

    total = 0.0
    anchors = 0
    for i in range(m):
        if positives == "label":
            pos = [p for p in range(m) if p != i and labels[p] == labels[i]]
        elif positives == "partner":
            pos = [p for p in range(m) if p != i and anchors_of[p] == anchors_of[i]]
        else:
            raise ValueError(f"unknown positive set {positives!r}")
        if not pos:
            continue
        anchors += 1
        inner = 0.0
        for p in pos:
            denom = 0.0
            for a in range(m):
                if a != i:
                    denom += math.exp(dot(feats[i], feats[a]) / tau)
            inner += math.log(math.exp(dot(feats[i], feats[p]) / tau) / denom)
        total += -inner / len(pos)
    if anchors == 0:
        return ContrastiveLoss(0.0, True)
    return ContrastiveLoss(total / anchors, False)


def supcon_bruteforce(batch: ContrastiveBatch) -> ContrastiveLoss:
    return contrastive_bruteforce(batch, "label")


def simclr_bruteforce(batch: ContrastiveBatch) -> ContrastiveLoss:
    return contrastive_bruteforce(batch, "partner")
