"""The semantic channel: multi-head attention feeding a selective-SSM (Mamba) block."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .autograd import Tensor, as_tensor, dropout, exp, layer_norm, matmul, silu, softmax
from .autograd.ops import conv1d_causal, linear
from .autograd.tensor import ShapeError
from .nn import Module, ones_param, uniform_param, zeros_param
from .ssm import init_delta_bias, init_state_matrix, selective_params, selective_ssm

MASK_VALUE = -1e9


class MhaParams(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator, init_range: float = 0.1):
        if dim % heads:
            raise ValueError(f"model dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.w_q = uniform_param(rng, (dim, dim), init_range)
        self.w_k = uniform_param(rng, (dim, dim), init_range)
        self.w_v = uniform_param(rng, (dim, dim), init_range)
        self.norm_gamma = ones_param(dim)
        self.norm_beta = zeros_param(dim)


def attention_mask(pad_mask: np.ndarray) -> np.ndarray:
    """Additive key mask ``(B, 1, 1, L)``: 0 on real tokens, -1e9 on padding."""
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if not np.all(pad_mask.any(axis=-1)):
        raise ValueError("attention over an all-padding row has empty support")
    return np.where(pad_mask, 0.0, MASK_VALUE)[:, None, None, :]


def mha_block(
    H,
    p: MhaParams,
    pad_mask: np.ndarray | None = None,
    attn_dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
    return_attention: bool = False,
):
    """``LayerNorm(concat_h(softmax(Q K^T / sqrt(d_k) + mask) V) + H)`` over ``(B, L, d)``."""
    H = as_tensor(H)
    batched = H.ndim == 3
    Hb = H if batched else H.reshape(1, *H.shape)
    nb, L, d = Hb.shape
    if d != p.w_q.shape[1]:
        raise ShapeError(f"mha_block: input width {d} != projection width {p.w_q.shape[1]}")
    if pad_mask is None:
        pad_mask = np.ones((nb, L), dtype=bool)
    pad_mask = np.asarray(pad_mask, dtype=bool).reshape(nb, L)
    heads, dk = p.heads, d // p.heads

    def split(x: Tensor) -> Tensor:
        return x.reshape(nb, L, heads, dk).transpose(0, 2, 1, 3)

    q = split(linear(Hb, p.w_q))
    k = split(linear(Hb, p.w_k))
    v = split(linear(Hb, p.w_v))
    scores = matmul(q, k.T) * (1.0 / math.sqrt(dk)) + Tensor(attention_mask(pad_mask))
    attn = softmax(scores, axis=-1)
    weights = dropout(attn, attn_dropout, rng, training)
    ctx = matmul(weights, v).transpose(0, 2, 1, 3).reshape(nb, L, d)
    out = layer_norm(ctx + Hb, p.norm_gamma, p.norm_beta)
    if not batched:
        out = out.reshape(L, d)
    return (out, attn) if return_attention else out


class MambaBlockParams(Module):
    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        state_size: int = 16,
        conv_width: int = 2,
        expand: int = 2,
        init_range: float = 0.1,
    ):
        inner = expand * dim
        self.in_proj_ssm = uniform_param(rng, (inner, dim), init_range)
        self.in_bias_ssm = uniform_param(rng, (inner,), init_range)
        self.in_proj_gate = uniform_param(rng, (inner, dim), init_range)
        self.in_bias_gate = uniform_param(rng, (inner,), init_range)
        self.conv_kernel = uniform_param(rng, (conv_width, inner), init_range)
        self.conv_bias = uniform_param(rng, (inner,), init_range)
        self.proj_B = uniform_param(rng, (state_size, inner), init_range)
        self.proj_C = uniform_param(rng, (state_size, inner), init_range)
        self.proj_delta = uniform_param(rng, (1, inner), init_range)
        self.delta_bias = Tensor(init_delta_bias(inner, rng), requires_grad=True)
        # A = -exp(A_log) stays strictly negative throughout training
        self.A_log = Tensor(np.log(-init_state_matrix(inner, state_size)), requires_grad=True)
        self.mix_proj = uniform_param(rng, (dim, inner), init_range)
        self.mix_bias = uniform_param(rng, (dim,), init_range)
        self.out_proj = uniform_param(rng, (dim, dim), init_range)
        self.out_bias = uniform_param(rng, (dim,), init_range)

    def state_matrix(self) -> Tensor:
        return -exp(self.A_log)


def mamba_block(H_mha, p: MambaBlockParams) -> Tensor:
    """Causal sequence-to-sequence block over ``(B, L, d)`` (or ``(L, d)``).

    ssm branch: ``SiLU(conv(linear(H)))`` then the selective scan; gate branch:
    ``SiLU(linear(H))``; their product is mixed back to ``d`` channels and
    passed through the output projection.
    """
    H = as_tensor(H_mha)
    u = silu(conv1d_causal(linear(H, p.in_proj_ssm, p.in_bias_ssm), p.conv_kernel, p.conv_bias))
    gate = silu(linear(H, p.in_proj_gate, p.in_bias_gate))
    delta, B, C = selective_params(u, p.proj_B, p.proj_C, p.proj_delta, p.delta_bias)
    y = selective_ssm(u, p.state_matrix(), delta, B, C)
    mixed = linear(y * gate, p.mix_proj, p.mix_bias)
    return linear(mixed, p.out_proj, p.out_bias)


class MambaFormerLayer(Module):
    """One MHA -> Mamba layer; either block may be absent for ablations."""

    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        heads: int = 4,
        state_size: int = 16,
        conv_width: int = 2,
        expand: int = 2,
        use_mha: bool = True,
        use_mamba: bool = True,
        init_range: float = 0.1,
    ):
        if not (use_mha or use_mamba):
            raise ValueError("a MambaFormer layer needs at least one of MHA / Mamba")
        self.mha = MhaParams(dim, heads, rng, init_range) if use_mha else None
        self.mamba = (
            MambaBlockParams(dim, rng, state_size, conv_width, expand, init_range) if use_mamba else None
        )
        if use_mamba:
            self.norm_gamma = ones_param(dim)
            self.norm_beta = zeros_param(dim)


def mambaformer_layer(
    H,
    layer: MambaFormerLayer,
    pad_mask: np.ndarray | None = None,
    attn_dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """``LayerNorm(mamba(H_mha) + H_mha)`` with ``H_mha = mha_block(H)``.

    Without a Mamba block the layer returns ``H_mha``; without MHA the Mamba
    block reads ``H`` directly and the residual is taken from ``H``.
    """
    H = as_tensor(H)
    h_mha = H
    if layer.mha is not None:
        h_mha = mha_block(H, layer.mha, pad_mask, attn_dropout, rng, training)
    if layer.mamba is None:
        return h_mha
    h_mam = mamba_block(h_mha, layer.mamba)
    return layer_norm(h_mam + h_mha, layer.norm_gamma, layer.norm_beta)


def mambaformer_stack(
    H,
    layers: Sequence[MambaFormerLayer],
    pad_mask: np.ndarray | None = None,
    attn_dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    if not layers:
        raise ValueError("mambaformer_stack needs at least one layer")
    out = as_tensor(H)
    for layer in layers:
        out = mambaformer_layer(out, layer, pad_mask, attn_dropout, rng, training)
    return out
