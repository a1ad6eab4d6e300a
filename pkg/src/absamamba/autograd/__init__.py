"""Minimal float64 tensor library with reverse-mode differentiation."""

from .gradcheck import NonFiniteError, finite_diff_check
from .ops import (
    conv1d_causal,
    dropout,
    embedding,
    layer_norm,
    linear,
    log_softmax,
    masked_mean,
    softmax,
)
from .tensor import (
    ShapeError,
    TapeNode,
    Tensor,
    add,
    as_tensor,
    broadcast_to,
    concat,
    div,
    exp,
    grad_enabled,
    getitem,
    log,
    make_result,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    silu,
    softplus,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
    unbroadcast,
)

__all__ = [name for name in dir() if not name.startswith("_")]
