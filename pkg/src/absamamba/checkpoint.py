"""Single-file checkpoints.

Format (version 1) is an uncompressed ``.npz`` archive:

* ``param/<path>``: every model parameter, keyed by its canonical path
* ``adam_m/<path>``, ``adam_v/<path>``: optimizer moments (optional)
* ``__meta__``: UTF-8 JSON bytes with ``format``, ``version``, ``config``,
  ``vocab``, ``tag_vocab``, ``epoch``, ``adam_t`` and ``rng_state``
  (the numpy bit-generator state of the training stream)

Arrays are stored as float64, so a reload reproduces forward passes bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import AbsaModel

FORMAT = "absamamba-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab: dict[str, int]
    tag_vocab: dict[str, int]
    epoch: int = 0
    rng_state: dict | None = None
    adam_t: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)

    def build_model(self) -> AbsaModel:
        model = AbsaModel(self.config, len(self.vocab), len(self.tag_vocab), np.random.default_rng(0))
        model.load_state_dict(self.params)
        model.eval()
        return model

    def rng(self) -> np.random.Generator:
        """Generator resumed from the stored training-stream state."""
        gen = np.random.default_rng()
        if self.rng_state is not None:
            gen.bit_generator.state = self.rng_state
        return gen


def from_training(result, config: ModelConfig) -> Checkpoint:
    """Checkpoint of the best epoch of a :class:`~absamamba.train.TrainResult`."""
    opt = result.best_optimizer or {}
    return Checkpoint(
        config=config,
        params=result.best_state or result.model.state_dict(),
        vocab=result.vocab,
        tag_vocab=result.tag_vocab,
        epoch=result.best_epoch,
        rng_state=result.rng_state,
        adam_t=opt.get("t", 0),
        adam_m=opt.get("m", {}),
        adam_v=opt.get("v", {}),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab,
        "tag_vocab": ckpt.tag_vocab,
        "epoch": ckpt.epoch,
        "adam_t": ckpt.adam_t,
        "rng_state": ckpt.rng_state,
    }
    arrays = {f"param/{k}": np.asarray(v, dtype=np.float64) for k, v in ckpt.params.items()}
    arrays.update({f"adam_m/{k}": v for k, v in ckpt.adam_m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in ckpt.adam_v.items()})
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    # write through a file handle so numpy does not append ".npz"
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as archive:
        if "__meta__" not in archive.files:
            raise ValueError(f"{path}: not a checkpoint (no metadata)")
        meta = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path}: unknown checkpoint format {meta.get('format')!r}")
        if meta.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
        for name in archive.files:
            if name == "__meta__":
                continue
            group, _, key = name.partition("/")
            groups[group][key] = archive[name]
    return Checkpoint(
        config=ModelConfig.from_dict(meta["config"]),
        params=groups["param"],
        vocab=meta["vocab"],
        tag_vocab=meta["tag_vocab"],
        epoch=meta["epoch"],
        rng_state=meta["rng_state"],
        adam_t=meta["adam_t"],
        adam_m=groups["adam_m"],
        adam_v=groups["adam_v"],
    )
