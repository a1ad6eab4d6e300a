"""Model / training configuration, ablation variants and config-file loading."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

VARIANTS = ("full", "no_mha", "no_mamba", "no_kan_gate", "mamba4absa", "mambaformer_only")
POOL_MODES = ("aspect", "full")


@dataclass
class ModelConfig:
    # embeddings / encoder
    word_dim: int = 300
    pos_dim: int = 30
    tag_dim: int = 30
    max_len: int = 200
    hidden: int = 50
    # channels
    gcn_layers: int = 2
    mambaformer_layers: int = 2
    heads: int = 4
    ssm_state: int = 16
    conv_width: int = 2
    expand: int = 2
    # KAN gates
    kan_grid: int = 5
    kan_degree: int = 3
    kan_range: float = 3.0
    kan_base_branch: bool = False
    # regularization
    dropout_embed: float = 0.7
    dropout_gcn: float = 0.1
    dropout_attn: float = 0.05
    # optimization
    lr: float = 0.002
    batch_size: int = 16
    epochs: int = 50
    grad_clip: float = 5.0
    init_range: float = 0.1
    seed: int = 1
    # behaviour switches
    pool: str = "aspect"
    variant: str = "full"

    def __post_init__(self):
        self.validate()

    @property
    def model_dim(self) -> int:
        return 2 * self.hidden

    @property
    def embed_dim(self) -> int:
        return self.word_dim + self.pos_dim + self.tag_dim

    def validate(self) -> None:
        if self.model_dim % self.heads:
            raise ValueError(f"model dim {self.model_dim} must be divisible by heads {self.heads}")
        for name in ("dropout_embed", "dropout_gcn", "dropout_attn"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {rate}")
        if self.gcn_layers < 1 or self.mambaformer_layers < 1:
            raise ValueError("layer counts must be >= 1")
        if self.pool not in POOL_MODES:
            raise ValueError(f"pool must be one of {POOL_MODES}, got {self.pool!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ValueError("batch_size must be >= 1, epochs and lr non-negative")

    # -- ablation structure -------------------------------------------
    @property
    def use_syngcn(self) -> bool:
        return self.variant not in ("mamba4absa", "mambaformer_only")

    @property
    def use_mha(self) -> bool:
        return self.variant not in ("no_mha", "mamba4absa")

    @property
    def use_mamba(self) -> bool:
        return self.variant != "no_mamba"

    @property
    def use_kan_gate(self) -> bool:
        return self.use_syngcn and self.variant != "no_kan_gate"

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def ablate(config: ModelConfig, variant: str) -> ModelConfig:
    """Return a copy of ``config`` with one ablation applied."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown ablation {variant!r}; expected one of {VARIANTS}")
    if config.variant not in ("full", variant):
        raise ValueError(f"conflicting ablations: {config.variant!r} already applied, got {variant!r}")
    return config.replace(variant=variant)


@dataclass
class RunConfig:
    """A training run: model hyperparameters plus data locations."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: str | None = None
    dev: str | None = None
    test: str | None = None
    train_conllu: str | None = None
    dev_conllu: str | None = None
    test_conllu: str | None = None
    word_vectors: str | None = None
    out_dir: str = "runs/default"


def load_run_config(path: str | Path) -> RunConfig:
    """Read a TOML file: top-level data keys plus a ``[model]`` table (flat keys also accepted)."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
    run_keys = {f.name for f in dataclasses.fields(RunConfig)} - {"model"}
    model_raw = dict(raw.pop("model", {}))
    run_raw = {}
    for key, value in raw.items():
        if key in model_keys:
            model_raw[key] = value
        elif key in run_keys:
            run_raw[key] = value
        else:
            raise KeyError(f"{path}: unknown config key {key!r}")
    # data paths are resolved relative to the config file
    for key in ("train", "dev", "test", "train_conllu", "dev_conllu", "test_conllu", "word_vectors"):
        if run_raw.get(key):
            run_raw[key] = str((path.parent / run_raw[key]).resolve())
    return RunConfig(model=ModelConfig.from_dict(model_raw), **run_raw)
