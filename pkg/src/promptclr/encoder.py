"""Small from-scratch masked-LM encoder.

Token + learned positional embeddings, post-LN transformer blocks with
explicit PAD-key attention masking, a bias-free MLM head restricted to label
words at read-out time, and L2-normalized hidden-state extraction for the
contrastive features. Sized to train on CPU in minutes, not to be competitive.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ExtractionError, SequenceLengthError
from .prompting import PAD_ID, PromptedText

EXTRACT_MODES = ("mask_token", "cls_token")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    num_layers: int = 2
    num_heads: int = 4
    max_seq_len: int = 128
    feedforward_width: int = 256
    dropout: float = 0.0

    def __post_init__(self):
        for field in ("vocab_size", "d_model", "num_layers", "num_heads",
                      "max_seq_len", "feedforward_width"):
            if getattr(self, field) <= 0:
                raise ConfigurationError(f"{field} must be positive")
        if self.d_model % self.num_heads != 0:
            raise ConfigurationError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")


class EncoderBlock(nn.Module):

    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.d_model
        self.num_heads = config.num_heads
        self.head_dim = d // config.num_heads
        self.wq = nn.Linear(d, d)
        self.wk = nn.Linear(d, d)
        self.wv = nn.Linear(d, d)
        self.wo = nn.Linear(d, d)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, config.feedforward_width)
        self.ff2 = nn.Linear(config.feedforward_width, d)
        self.dropout = config.dropout

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor,
                train_mode: bool) -> torch.Tensor:
        bsz, length, d = x.shape
        shape = (bsz, length, self.num_heads, self.head_dim)
        q = self.wq(x).view(shape).transpose(1, 2)
        k = self.wk(x).view(shape).transpose(1, 2)
        v = self.wv(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        # PAD positions are masked as keys only; PAD queries still see real keys,
        # so no softmax row is all -inf as long as [CLS] is present.
        scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = F.dropout(scores.softmax(dim=-1), self.dropout, train_mode)
        ctx = (attn @ v).transpose(1, 2).reshape(bsz, length, d)
        x = self.norm1(x + F.dropout(self.wo(ctx), self.dropout, train_mode))
        h = self.ff2(F.gelu(self.ff1(x)))
        return self.norm2(x + F.dropout(h, self.dropout, train_mode))


class MaskedLMEncoder(nn.Module):
    """Maps token id sequences to final-layer hidden states; holds the MLM
    head vectors w (one per vocabulary word, no bias)."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.d_model)
        self.emb_norm = nn.LayerNorm(config.d_model)
        self.blocks = nn.ModuleList(EncoderBlock(config) for _ in range(config.num_layers))
        self.head = nn.Parameter(torch.empty(config.vocab_size, config.d_model))
        self._init_weights(seed)

    def _init_weights(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, (nn.Linear, nn.Embedding)):
                    module.weight.copy_(
                        torch.normal(0.0, 0.02, module.weight.shape, generator=gen))
                    if getattr(module, "bias", None) is not None:
                        module.bias.zero_()
                elif isinstance(module, nn.LayerNorm):
                    module.weight.fill_(1.0)
                    module.bias.zero_()
            self.head.copy_(torch.normal(0.0, 0.02, self.head.shape, generator=gen))

    def forward(self, token_ids, train_mode: bool = False) -> torch.Tensor:
        """Final-layer states, shape [L, d] for one sequence or [B, L, d] for a
        batch. PAD positions never contribute as attention keys."""
        ids = torch.as_tensor(token_ids, dtype=torch.long)
        single = ids.dim() == 1
        if single:
            ids = ids.unsqueeze(0)
        if ids.shape[1] > self.config.max_seq_len:
            raise SequenceLengthError(
                f"input length {ids.shape[1]} exceeds max_seq_len {self.config.max_seq_len}")
        if int(ids.max()) >= self.config.vocab_size or int(ids.min()) < 0:
            raise ConfigurationError("token id out of vocabulary range")
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)[None, :, :]
        x = F.dropout(self.emb_norm(x), self.config.dropout, train_mode)
        pad_mask = ids == PAD_ID
        for block in self.blocks:
            x = block(x, pad_mask, train_mode)
        return x.squeeze(0) if single else x


def init_params(config: ModelConfig, seed: int = 0) -> MaskedLMEncoder:
    """Fresh encoder with N(0, 0.02) weight matrices, deterministic per seed."""
    return MaskedLMEncoder(config, seed)


def extract_representation(hidden: torch.Tensor, prompted: PromptedText,
                           mode: str = "mask_token") -> torch.Tensor:
    """Unit-norm feature z: the final state at [MASK] (or at [CLS] for the
    ablation read-out)."""
    if mode not in EXTRACT_MODES:
        raise ValueError(f"mode must be one of {EXTRACT_MODES}, got {mode!r}")
    if hidden.dim() != 2:
        raise ExtractionError("expected a single sequence of hidden states, L x d")
    if mode == "mask_token":
        if prompted.mask_position is None:
            raise ExtractionError(f"prompt {prompted.source_example_id} has no mask position")
        row = hidden[prompted.mask_position]
    else:
        row = hidden[0]
    return row / row.norm().clamp_min(1e-12)


def label_word_distribution(hidden: torch.Tensor, prompted: PromptedText,
                            label_ids: Sequence[int],
                            params: MaskedLMEncoder) -> torch.Tensor:
    """p(y) = exp(w_{V(y)} . h_mask) / sum_{y'} exp(w_{V(y')} . h_mask).

    Softmax over label words only, no bias term."""
    if prompted.mask_position is None:
        raise ExtractionError(f"prompt {prompted.source_example_id} has no mask position")
    h = hidden[prompted.mask_position]
    logits = params.head[torch.as_tensor(list(label_ids), dtype=torch.long)] @ h
    return logits.softmax(dim=-1)


def pad_batch(prompts: Sequence[PromptedText],
              pad_to: Optional[int] = None) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack prompts into (ids [B, L], mask_positions [B]) with PAD fill."""
    if not prompts:
        raise ValueError("empty prompt batch")
    length = pad_to if pad_to is not None else max(len(p.token_ids) for p in prompts)
    ids = torch.full((len(prompts), length), PAD_ID, dtype=torch.long)
    positions = torch.empty(len(prompts), dtype=torch.long)
    for row, prompt in enumerate(prompts):
        ids[row, :len(prompt.token_ids)] = torch.as_tensor(prompt.token_ids)
        if prompt.mask_position is None:
            raise ExtractionError(f"prompt {prompt.source_example_id} has no mask position")
        positions[row] = prompt.mask_position
    return ids, positions


def batch_mask_states(hidden: torch.Tensor, mask_positions: torch.Tensor) -> torch.Tensor:
    """Gather the [MASK] state per batch row, shape [B, d]."""
    return hidden[torch.arange(hidden.shape[0]), mask_positions]


def batch_label_logits(mask_h: torch.Tensor, label_ids: Sequence[int],
                       params: MaskedLMEncoder) -> torch.Tensor:
    """Label-word logits [B, C] from mask states [B, d]."""
    return mask_h @ params.head[torch.as_tensor(list(label_ids), dtype=torch.long)].T


def save_checkpoint(path: str | Path, params: MaskedLMEncoder) -> None:
    """Flat binary of named tensors plus a JSON sidecar (shapes + config).

    Round-trip is bit-exact: raw little-endian buffers, no pickling.
    """
    path = Path(path)
    sidecar: dict = {"config": dataclasses.asdict(params.config), "tensors": {}}
    offset = 0
    with open(path, "wb") as fh:
        for name, tensor in params.state_dict().items():
            arr = tensor.detach().cpu().contiguous().numpy()
            fh.write(arr.tobytes())
            sidecar["tensors"][name] = {
                "shape": list(arr.shape),
                "dtype": arr.dtype.name,
                "offset": offset,
            }
            offset += arr.nbytes
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> MaskedLMEncoder:
    path = Path(path)
    with open(path.with_suffix(".json"), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    config = ModelConfig(**sidecar["config"])
    params = MaskedLMEncoder(config, seed=0)
    raw = path.read_bytes()
    state = {}
    for name, meta in sidecar["tensors"].items():
        dtype = np.dtype(meta["dtype"])
        count = int(np.prod(meta["shape"], dtype=np.int64)) if meta["shape"] else 1
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=meta["offset"])
        state[name] = torch.from_numpy(arr.reshape(meta["shape"]).copy())
    params.load_state_dict(state)
    return params
