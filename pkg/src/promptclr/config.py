"""Flat JSON run configuration: task description, input file paths, model and
training hyperparameters, seeds, and the output directory. Command-line flags
override file values; a sha256 digest of the resolved config (minus the output
path) identifies the experiment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .corpus import DEFAULT_SEEDS, TaskSpec
from .encoder import ModelConfig
from .errors import ConfigurationError
from .trainer import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # task
    task_name: str = "synthetic"
    num_classes: int = 2
    is_pair: bool = False
    metric: str = "accuracy"
    # input files
    dataset: str = "corpus.tsv"
    templates: str = "templates.txt"
    verbalizer: str = "verbalizer.tsv"
    lexicon: Optional[str] = None
    # few-shot protocol
    k: int = 16
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    eval_with_demos: bool = True
    # model
    d_model: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feedforward_width: int = 256
    dropout: float = 0.0
    # training (seed comes from `seeds`, one run each)
    max_steps: int = 1000
    batch_size: int = 16
    lr_mlm: float = 3e-4
    lr_supcon: float = 3e-4
    loss_mode: str = "supcon"
    step_mode: str = "sequential"
    view_strategy: str = "demo_and_temp"
    representation_mode: str = "mask_token"
    temperature: float = 0.5
    with_demos: bool = True
    augment_op: Optional[str] = None
    augment_alpha: float = 0.1
    supcon_weight: float = 1.0
    max_len: int = 128
    # output
    out: str = "runs/default"
    log_every: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        if self.k < 1:
            raise ConfigurationError("k must be at least 1")
        if self.log_every < 1:
            raise ConfigurationError("log_every must be at least 1")
        self.task_spec()  # validates task fields
        self.train_config(self.seeds[0])  # validates training fields

    def task_spec(self) -> TaskSpec:
        return TaskSpec(name=self.task_name, num_classes=self.num_classes,
                        is_pair=self.is_pair, metric=self.metric)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, d_model=self.d_model,
                           num_layers=self.num_layers, num_heads=self.num_heads,
                           max_seq_len=self.max_len, feedforward_width=self.feedforward_width,
                           dropout=self.dropout)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(max_steps=self.max_steps, batch_size=self.batch_size,
                           lr_mlm=self.lr_mlm, lr_supcon=self.lr_supcon,
                           loss_mode=self.loss_mode, step_mode=self.step_mode,
                           view_strategy=self.view_strategy,
                           representation_mode=self.representation_mode,
                           temperature=self.temperature, seed=seed,
                           with_demos=self.with_demos, augment_op=self.augment_op,
                           augment_alpha=self.augment_alpha,
                           supcon_weight=self.supcon_weight, max_len=self.max_len)

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        return out

    def digest(self) -> str:
        """sha256 over the canonical JSON; the output directory is excluded so
        relocating results does not change the experiment identity."""
        payload = self.to_json()
        del payload["out"]
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def input_paths(self) -> list[Path]:
        paths = [Path(self.dataset), Path(self.templates), Path(self.verbalizer)]
        if self.lexicon is not None:
            paths.append(Path(self.lexicon))
        return paths

    def validate_paths(self) -> None:
        missing = [str(p) for p in self.input_paths() if not p.is_file()]
        if missing:
            raise ConfigurationError(f"missing input files: {', '.join(missing)}")


def load_run_config(path: str | Path, overrides: Optional[dict] = None) -> RunConfig:
    """Read a flat JSON config; ``overrides`` (from CLI flags) win over file
    values. Unknown keys are rejected to catch typos."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"{path}: invalid JSON ({err})") from err
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    raw.pop("config_digest", None)  # informational field in resolved dumps
    # file-sourced paths are relative to the config file; CLI overrides below
    # stay relative to the working directory
    base = path.parent
    for key in ("dataset", "templates", "verbalizer", "lexicon", "out"):
        if raw.get(key) is not None and not Path(raw[key]).is_absolute():
            raw[key] = str(base / raw[key])
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown config keys: {sorted(unknown)}")
    if "seeds" in raw:
        raw["seeds"] = tuple(raw["seeds"])
    return RunConfig(**raw)


def save_run_config(path: str | Path, config: RunConfig) -> None:
    payload = config.to_json()
    payload["config_digest"] = config.digest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
