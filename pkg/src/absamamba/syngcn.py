"""Graph convolution over a (soft) syntactic dependency adjacency."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autograd import Tensor, as_tensor, dropout, matmul, relu
from .autograd.ops import linear
from .autograd.tensor import ShapeError
from .nn import Module, uniform_param

SOURCES = ("parser-probability", "conllu-fallback", "identity")


@dataclass
class SynAdjacency:
    matrix: np.ndarray  # (L, L) or (B, L, L), entries >= 0
    source: str = "parser-probability"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.source not in SOURCES:
            raise ValueError(f"unknown adjacency source {self.source!r}; expected one of {SOURCES}")
        if self.matrix.ndim < 2 or self.matrix.shape[-1] != self.matrix.shape[-2]:
            raise ShapeError(f"adjacency must be square, got {self.matrix.shape}")


def normalize_adjacency(raw, pad_mask: np.ndarray | None = None):
    """Add self-loops on real positions and row-normalize.

    Rows that are all zero (on real positions) become one-hot self-loops;
    padding rows and columns stay zero.  Accepts a :class:`SynAdjacency` or an
    array and returns the same kind.
    """
    wrapped = isinstance(raw, SynAdjacency)
    A = np.array(raw.matrix if wrapped else raw, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if np.any(A < 0):
        raise ValueError("adjacency entries must be non-negative")
    L = A.shape[-1]
    real = np.ones(A.shape[:-1], dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    pair = real[..., :, None] & real[..., None, :]
    A = np.where(pair, A, 0.0)
    A = A + np.eye(L) * real[..., None]
    sums = A.sum(axis=-1, keepdims=True)
    A = np.divide(A, sums, out=np.zeros_like(A), where=sums > 0)
    if wrapped:
        return SynAdjacency(A, raw.source)
    return A


class GcnLayer(Module):
    def __init__(self, dim: int, rng: np.random.Generator, init_range: float = 0.1):
        self.weight = uniform_param(rng, (dim, dim), init_range)
        self.bias = uniform_param(rng, (dim,), init_range)


def gcn_layer(H, A, p: GcnLayer, pad_mask: np.ndarray | None = None) -> Tensor:
    """``relu(A @ H @ W.T + b)``; rows at padding positions are zeroed."""
    H = as_tensor(H)
    A = A.matrix if isinstance(A, SynAdjacency) else A
    A = np.asarray(A, dtype=np.float64)
    L = H.shape[-2]
    if A.shape[-2:] != (L, L) or H.shape[-1] != p.weight.shape[1]:
        raise ShapeError(
            f"gcn_layer: H {H.shape}, adjacency {A.shape}, weight {p.weight.shape} are inconsistent"
        )
    out = relu(matmul(Tensor(A), linear(H, p.weight)) + p.bias)
    if pad_mask is not None:
        out = out * Tensor(np.asarray(pad_mask, dtype=np.float64)[..., None])
    return out


class SynGcn(Module):
    def __init__(self, dim: int, n_layers: int, rng: np.random.Generator, init_range: float = 0.1):
        if n_layers < 1:
            raise ValueError("SynGCN needs at least one layer")
        self.layers = [GcnLayer(dim, rng, init_range) for _ in range(n_layers)]


def syngcn_forward(
    H,
    A,
    layers: Sequence[GcnLayer],
    rate: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
    pad_mask: np.ndarray | None = None,
) -> Tensor:
    """Stacked GCN layers with dropout between them (training only)."""
    if not layers:
        raise ValueError("syngcn_forward needs at least one layer")
    out = as_tensor(H)
    for i, layer in enumerate(layers):
        if i > 0:
            out = dropout(out, rate, rng, training)
        out = gcn_layer(out, A, layer, pad_mask)
    return out
