"""KAN-gated fusion of the syntactic and semantic channels, pooling, classifier, loss, metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autograd import Tensor, as_tensor, concat, log_softmax, masked_mean, sigmoid, softmax
from .autograd.ops import linear
from .autograd.tensor import ShapeError
from .kan import BSplineGrid, KanLayerParams, kan_layer
from .nn import Module, uniform_param

LABELS = ("positive", "negative", "neutral")
NUM_CLASSES = len(LABELS)


class KanGates(Module):
    """Independent single-layer KANs producing the syntactic and semantic gate maps."""

    def __init__(self, dim: int, rng: np.random.Generator, grid: BSplineGrid, base_branch: bool = False):
        self.syn = KanLayerParams.init(dim, dim, rng, grid, base_branch=base_branch)
        self.sem = KanLayerParams.init(dim, dim, rng, grid, base_branch=base_branch)


class FcMerge(Module):
    """Plain fully connected merge of ``[H_syn || H_sem]`` (gate-free ablation)."""

    def __init__(self, dim: int, rng: np.random.Generator, init_range: float = 0.1):
        self.weight = uniform_param(rng, (dim, 2 * dim), init_range)
        self.bias = uniform_param(rng, (dim,), init_range)


class Classifier(Module):
    def __init__(self, dim: int, rng: np.random.Generator, init_range: float = 0.1, n_classes: int = NUM_CLASSES):
        self.weight = uniform_param(rng, (n_classes, dim), init_range)
        self.bias = uniform_param(rng, (n_classes,), init_range)


def kan_gate(H, gate_params: KanLayerParams) -> Tensor:
    """``sigmoid(KAN(H))``: a gate map with every entry in (0, 1)."""
    return sigmoid(kan_layer(H, gate_params))


def gated_fuse(H_syn, H_sem, g_syn, g_sem) -> Tensor:
    """``g_syn * H_syn + (1 - g_syn) * g_sem * H_sem`` elementwise."""
    H_syn, H_sem, g_syn, g_sem = map(as_tensor, (H_syn, H_sem, g_syn, g_sem))
    if not H_syn.shape == H_sem.shape == g_syn.shape == g_sem.shape:
        raise ShapeError(
            f"gated_fuse: shapes differ: {H_syn.shape}, {H_sem.shape}, {g_syn.shape}, {g_sem.shape}"
        )
    return g_syn * H_syn + (1.0 - g_syn) * g_sem * H_sem


def fc_merge(H_syn, H_sem, p: FcMerge) -> Tensor:
    return linear(concat([as_tensor(H_syn), as_tensor(H_sem)], axis=-1), p.weight, p.bias)


def mean_pool(H_c, pool_mask) -> Tensor:
    """Mean over positions where ``pool_mask`` is true: ``(..., L, d) -> (..., d)``."""
    H_c = as_tensor(H_c)
    pool_mask = np.asarray(pool_mask, dtype=bool)
    if pool_mask.shape != H_c.shape[:-1]:
        raise ShapeError(f"mean_pool: mask {pool_mask.shape} does not match {H_c.shape[:-1]}")
    if not np.all(pool_mask.any(axis=-1)):
        raise ValueError("mean_pool: empty pooling mask")
    return masked_mean(H_c, pool_mask, axis=-2)


def logits(h, p: Classifier) -> Tensor:
    return linear(as_tensor(h), p.weight, p.bias)


@dataclass
class Prediction:
    probabilities: np.ndarray  # (..., 3)
    label: np.ndarray | int


def classify(h, W_p, b_p) -> Prediction:
    """``softmax(W_p h + b_p)``; ties in the argmax go to the lowest class index."""
    z = linear(as_tensor(h), as_tensor(W_p), as_tensor(b_p))
    probs = softmax(z, axis=-1).data
    label = np.argmax(probs, axis=-1)  # first maximum wins
    return Prediction(probs, int(label) if np.ndim(label) == 0 else label)


def cross_entropy(logit_tensor, gold) -> Tensor:
    """Mean negative log-likelihood of the gold class, via log-sum-exp."""
    z = as_tensor(logit_tensor)
    if z.ndim == 1:
        z = z.reshape(1, -1)
    gold = np.atleast_1d(np.asarray(gold))
    n_classes = z.shape[-1]
    if gold.shape != (z.shape[0],):
        raise ShapeError(f"cross_entropy: {gold.shape[0]} labels for {z.shape[0]} predictions")
    if not np.issubdtype(gold.dtype, np.integer) or np.any((gold < 0) | (gold >= n_classes)):
        raise ValueError(f"gold labels must be integers in [0, {n_classes}), got {gold.tolist()}")
    onehot = np.zeros(z.shape)
    onehot[np.arange(z.shape[0]), gold] = -1.0 / z.shape[0]
    return (log_softmax(z, axis=-1) * Tensor(onehot)).sum()


def metrics(preds: Sequence[int], golds: Sequence[int], n_classes: int = NUM_CLASSES) -> dict:
    """Accuracy, per-class F1 and macro-F1 (unweighted over all classes)."""
    preds = np.asarray(preds, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if preds.shape != golds.shape:
        raise ValueError(f"metrics: {preds.size} predictions vs {golds.size} gold labels")
    if preds.size == 0:
        raise ValueError("metrics: empty label lists")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (golds, preds), 1)
    tp = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0)
    actual = confusion.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros(n_classes), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    return {
        "accuracy": float(tp.sum() / preds.size),
        "macro_f1": float(f1.mean()),
        "per_class_f1": [float(v) for v in f1],
        "n": int(preds.size),
    }
