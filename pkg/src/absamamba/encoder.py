"""Token / position / POS embeddings and the bidirectional LSTM encoder."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .autograd import Tensor, as_tensor, concat, embedding, make_result
from .autograd.ops import linear
from .autograd.tensor import ShapeError, _sigmoid
from .nn import Module, uniform_param, zeros_param

logger = logging.getLogger(__name__)

PAD = 0


class EmbeddingTables(Module):
    """Word, position and POS-tag tables; row 0 of each is padding and stays zero."""

    def __init__(
        self,
        vocab_size: int,
        n_positions: int,
        n_tags: int,
        rng: np.random.Generator,
        word_dim: int = 300,
        pos_dim: int = 30,
        tag_dim: int = 30,
        init_range: float = 0.1,
    ):
        word = rng.normal(0.0, 0.1, size=(vocab_size, word_dim))
        self.word = Tensor(word, requires_grad=True)
        self.position = uniform_param(rng, (n_positions, pos_dim), init_range)
        self.postag = uniform_param(rng, (n_tags, tag_dim), init_range)
        self.zero_padding()

    @property
    def out_dim(self) -> int:
        return self.word.shape[1] + self.position.shape[1] + self.postag.shape[1]

    def zero_padding(self) -> None:
        for table in (self.word, self.position, self.postag):
            table.data[PAD] = 0.0


def embed(tokens, positions, postags, tables: EmbeddingTables) -> Tensor:
    """Concatenate word, position and POS embeddings per token: ``(..., L, out_dim)``."""
    tokens, positions, postags = (np.asarray(a, dtype=np.int64) for a in (tokens, positions, postags))
    if not tokens.shape == positions.shape == postags.shape:
        raise ShapeError(
            f"embed: index arrays disagree: {tokens.shape}, {positions.shape}, {postags.shape}"
        )
    return concat(
        [
            embedding(tables.word, tokens),
            embedding(tables.position, positions),
            embedding(tables.postag, postags),
        ],
        axis=-1,
    )


def load_word_vectors(path: str | Path, vocab: dict[str, int], table: Tensor) -> int:
    """Overwrite rows of ``table`` from a ``token v1 ... vD`` text file; returns rows filled."""
    dim = table.shape[1]
    filled = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < dim + 1:
                continue
            token, values = " ".join(parts[:-dim]), parts[-dim:]
            idx = vocab.get(token)
            if idx is None or idx == PAD:
                continue
            try:
                table.data[idx] = np.asarray(values, dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed vector for {token!r}") from None
            filled += 1
    logger.info("loaded %d/%d word vectors from %s", filled, len(vocab), path)
    return filled


class LstmDirection(Module):
    """One direction of an LSTM; gate order is input, forget, cell, output."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator, init_range: float = 0.1):
        self.w_ih = uniform_param(rng, (4 * hidden, input_dim), init_range)
        self.w_hh = uniform_param(rng, (4 * hidden, hidden), init_range)
        self.bias = uniform_param(rng, (4 * hidden,), init_range)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]


class BiLstm(Module):
    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator, init_range: float = 0.1):
        self.fwd = LstmDirection(input_dim, hidden, rng, init_range)
        self.bwd = LstmDirection(input_dim, hidden, rng, init_range)

    @property
    def out_dim(self) -> int:
        return 2 * self.fwd.hidden


def lstm_recurrence(xw, w_hh, mask: np.ndarray | None = None, reverse: bool = False) -> Tensor:
    """Run the LSTM recurrence over pre-projected inputs ``xw`` of shape ``(B, L, 4H)``.

    Where ``mask`` is false the state is carried through unchanged, so padding
    never leaks into real positions regardless of direction.
    """
    xw, w_hh = as_tensor(xw), as_tensor(w_hh)
    nb, L, four_h = xw.shape
    H = four_h // 4
    if w_hh.shape != (four_h, H):
        raise ShapeError(f"lstm: recurrent weight {w_hh.shape} incompatible with gates {four_h}")
    m = np.ones((nb, L)) if mask is None else np.asarray(mask, dtype=np.float64)
    order = range(L - 1, -1, -1) if reverse else range(L)
    W = w_hh.data

    hs = np.zeros((nb, L, H))
    h_prev_all = np.zeros((nb, L, H))
    c_prev_all = np.zeros((nb, L, H))
    gates = np.zeros((nb, L, 4, H))
    tcs = np.zeros((nb, L, H))
    h = np.zeros((nb, H))
    c = np.zeros((nb, H))
    for t in order:
        h_prev_all[:, t] = h
        c_prev_all[:, t] = c
        a = xw.data[:, t] + h @ W.T
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        mt = m[:, t, None]
        h = mt * h_new + (1.0 - mt) * h
        c = mt * c_new + (1.0 - mt) * c
        gates[:, t] = np.stack([i, f, g, o], axis=1)
        tcs[:, t] = tc
        hs[:, t] = h

    def backward(gout):
        gxw = np.zeros_like(xw.data)
        gW = np.zeros_like(W)
        dh = np.zeros((nb, H))
        dc = np.zeros((nb, H))
        for t in reversed(list(order)):
            mt = m[:, t, None]
            dh = dh + gout[:, t]
            i, f, g, o = (gates[:, t, k] for k in range(4))
            tc = tcs[:, t]
            dh_new = mt * dh
            dc_new = mt * dc + dh_new * o * (1.0 - tc * tc)
            da = np.concatenate(
                [
                    dc_new * g * i * (1.0 - i),
                    dc_new * c_prev_all[:, t] * f * (1.0 - f),
                    dc_new * i * (1.0 - g * g),
                    dh_new * tc * o * (1.0 - o),
                ],
                axis=1,
            )
            gxw[:, t] = da
            gW += da.T @ h_prev_all[:, t]
            dh = da @ W + (1.0 - mt) * dh
            dc = dc_new * f + (1.0 - mt) * dc
        return gxw, gW

    return make_result(hs, (xw, w_hh), "lstm", backward)


def bilstm(x, params: BiLstm, mask: np.ndarray | None = None) -> Tensor:
    """Forward and backward passes concatenated per position: ``(..., L, 2H)``.

    Outputs at masked (padding) positions are zero.
    """
    x = as_tensor(x)
    if x.ndim not in (2, 3):
        raise ShapeError(f"bilstm: expected (L, D) or (B, L, D), got {x.shape}")
    batched = x.ndim == 3
    xb = x if batched else x.reshape(1, *x.shape)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(xb.shape[:2])
    fwd = lstm_recurrence(linear(xb, params.fwd.w_ih, params.fwd.bias), params.fwd.w_hh, mask)
    bwd = lstm_recurrence(
        linear(xb, params.bwd.w_ih, params.bwd.bias), params.bwd.w_hh, mask, reverse=True
    )
    out = concat([fwd, bwd], axis=-1)
    if mask is not None:
        out = out * Tensor(mask[..., None].astype(np.float64))
    return out if batched else out.reshape(*out.shape[1:])


def extract_aspect(H, span) -> Tensor:
    """Rows ``[start, end)`` of the ``(L, D)`` hidden-state matrix."""
    H = as_tensor(H)
    start, end = span
    if not 0 <= start < end <= H.shape[-2]:
        raise ValueError(f"invalid aspect span [{start}, {end}) for length {H.shape[-2]}")
    return H[..., start:end, :]
