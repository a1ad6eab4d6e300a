"""Optimization, training loop, evaluation and the layer-count sweep."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autograd import NonFiniteError, no_grad
from .config import ModelConfig
from .data import UNK_ID, Sample, build_tag_vocab, build_vocab, make_batches
from .encoder import load_word_vectors
from .fusion import cross_entropy, metrics
from .model import AbsaModel

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    moments: tuple[dict[str, np.ndarray], dict[str, np.ndarray]],
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; returns ``(params, (m, v))`` as new dicts."""
    if t < 1:
        raise ValueError(f"Adam step counter must be >= 1, got {t}")
    m_old, v_old = moments
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for path, theta in params.items():
        g = grads[path]
        if g.shape != theta.shape:
            raise ValueError(f"{path}: gradient shape {g.shape} != parameter shape {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {path}")
        m = beta1 * m_old[path] + (1.0 - beta1) * g
        v = beta2 * v_old[path] + (1.0 - beta2) * g * g
        new_params[path] = theta - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[path], new_v[path] = m, v
    return new_params, (new_m, new_v)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the original norm."""
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


class Adam:
    """Stateful wrapper that applies :func:`adam_step` to a model's parameters."""

    def __init__(self, model: AbsaModel, lr: float, grad_clip: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.model = model
        self.lr, self.grad_clip = lr, grad_clip
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in model.named_parameters()}
        self.v = {k: np.zeros_like(p.data) for k, p in model.named_parameters()}

    def step(self) -> float:
        named = dict(self.model.named_parameters())
        grads = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in named.items()}
        for path, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {path}")
        norm = clip_global_norm(grads, self.grad_clip)
        self.t += 1
        params, (self.m, self.v) = adam_step(
            {k: p.data for k, p in named.items()}, grads, (self.m, self.v),
            self.t, self.lr, self.beta1, self.beta2, self.eps,
        )
        for k, p in named.items():
            p.data = params[k]
        self.model.after_step()
        return norm

    def state(self) -> dict:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: AbsaModel
    vocab: dict[str, int]
    tag_vocab: dict[str, int]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_state: dict[str, np.ndarray] = field(default_factory=dict)
    best_optimizer: dict = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    seconds: float = 0.0

    def restore_best(self) -> None:
        if self.best_state:
            self.model.load_state_dict(self.best_state)


def build_model(config: ModelConfig, vocab: dict[str, int], tag_vocab: dict[str, int]) -> AbsaModel:
    return AbsaModel(config, len(vocab), len(tag_vocab), np.random.default_rng(config.seed))


def train(
    config: ModelConfig,
    train_set: Sequence[Sample],
    dev_set: Sequence[Sample] | None = None,
    *,
    vocab: dict[str, int] | None = None,
    tag_vocab: dict[str, int] | None = None,
    word_vectors: str | Path | None = None,
    log_path: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train from scratch; deterministic given ``config.seed``.

    Every epoch appends ``{"epoch", "train_loss", "dev_acc", "dev_macro_f1"}``
    to the history (and to ``log_path`` as JSON lines).  The best epoch is
    chosen by dev accuracy, ties broken by dev macro-F1; without a dev set the
    last epoch wins.
    """
    if not train_set:
        raise ValueError("train() needs a non-empty training set")
    config.validate()
    vocab = vocab or build_vocab(train_set)
    tag_vocab = tag_vocab or build_tag_vocab(train_set)
    model = build_model(config, vocab, tag_vocab)
    if word_vectors:
        load_word_vectors(word_vectors, vocab, model.embeddings.word)
        model.embeddings.zero_padding()
    opt = Adam(model, config.lr, config.grad_clip)
    rng = np.random.default_rng([config.seed, 1])
    result = TrainResult(model, vocab, tag_vocab)
    best_key = None
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    start = time.perf_counter()
    try:
        for epoch in range(1, config.epochs + 1):
            model.train()
            batches = make_batches(
                train_set, config.batch_size, int(rng.integers(2**32)), vocab, tag_vocab, config.max_len
            )
            total, count = 0.0, 0
            for b, batch in enumerate(batches):
                model.zero_grad()
                loss = cross_entropy(model(batch, rng), batch.labels)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
                loss.backward()
                opt.step()
                total += value * len(batch)
                count += len(batch)
            record = {"epoch": epoch, "train_loss": total / count, "dev_acc": None, "dev_macro_f1": None}
            if dev_set:
                dev = evaluate(model, dev_set, vocab, tag_vocab)
                record["dev_acc"], record["dev_macro_f1"] = dev["accuracy"], dev["macro_f1"]
            result.history.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            logger.info("epoch %d loss %.4f dev_acc %s", epoch, record["train_loss"], record["dev_acc"])
            key = (record["dev_acc"], record["dev_macro_f1"]) if dev_set else (epoch, 0)
            if best_key is None or key > best_key:
                best_key = key
                result.best_epoch = epoch
                result.best_state = model.state_dict()
                result.best_optimizer = opt.state()
            if on_epoch:
                on_epoch(record)
    finally:
        if log_fh:
            log_fh.close()
    if config.epochs == 0:
        result.best_state = model.state_dict()
        result.best_optimizer = opt.state()
    result.rng_state = rng.bit_generator.state
    result.seconds = time.perf_counter() - start
    return result


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def check_vocab(model: AbsaModel, vocab: dict[str, int], tag_vocab: dict[str, int]) -> None:
    if len(vocab) != model.embeddings.word.shape[0]:
        raise ValueError(
            f"vocabulary mismatch: {len(vocab)} entries vs {model.embeddings.word.shape[0]} embedding rows"
        )
    if len(tag_vocab) != model.embeddings.postag.shape[0]:
        raise ValueError(
            f"POS vocabulary mismatch: {len(tag_vocab)} entries vs {model.embeddings.postag.shape[0]} rows"
        )


def predict(
    model: AbsaModel,
    samples: Sequence[Sample],
    vocab: dict[str, int],
    tag_vocab: dict[str, int],
    batch_size: int = 64,
) -> np.ndarray:
    """Predicted class indices in input order (inference mode, no dropout)."""
    was_training = model.training
    model.eval()
    out = []
    try:
        with no_grad():
            for batch in make_batches(samples, batch_size, None, vocab, tag_vocab, model.config.max_len):
                out.append(np.argmax(model(batch).data, axis=-1))
    finally:
        model.train(was_training)
    return np.concatenate(out)


def evaluate(
    model: AbsaModel,
    samples: Sequence[Sample],
    vocab: dict[str, int],
    tag_vocab: dict[str, int],
    batch_size: int = 64,
) -> dict:
    """Metrics JSON ``{"accuracy", "macro_f1", "per_class_f1", "n"}``."""
    if not samples:
        raise ValueError("evaluate() needs a non-empty dataset")
    check_vocab(model, vocab, tag_vocab)
    if all(vocab.get(tok, UNK_ID) == UNK_ID for s in samples for tok in s.tokens):
        raise ValueError("vocabulary mismatch: no dataset token is known to the model")
    preds = predict(model, samples, vocab, tag_vocab, batch_size)
    return metrics(preds, [s.label_id for s in samples])


def layer_sweep(
    config: ModelConfig,
    counts: Sequence[int],
    train_set: Sequence[Sample],
    dev_set: Sequence[Sample] | None = None,
    test_set: Sequence[Sample] | None = None,
) -> list[dict]:
    """One model per layer count (shared seed); both stacks get ``count`` layers."""
    if not counts or any(c < 1 for c in counts):
        raise ValueError(f"layer counts must be >= 1, got {list(counts)}")
    eval_set = test_set or dev_set or train_set
    rows = []
    for count in counts:
        cfg = config.replace(gcn_layers=count, mambaformer_layers=count)
        result = train(cfg, train_set, dev_set)
        result.restore_best()
        m = evaluate(result.model, eval_set, result.vocab, result.tag_vocab)
        rows.append(
            {"layers": count, "accuracy": m["accuracy"], "macro_f1": m["macro_f1"],
             "seconds": round(result.seconds, 3)}
        )
        logger.info("layers=%d acc=%.4f f1=%.4f", count, m["accuracy"], m["macro_f1"])
    return rows


def format_table(rows: Sequence[dict]) -> str:
    lines = ["layers  accuracy  macro_f1  seconds"]
    for r in rows:
        lines.append(f"{r['layers']:>6}  {r['accuracy']:>8.4f}  {r['macro_f1']:>8.4f}  {r['seconds']:>7.1f}")
    return "\n".join(lines)
