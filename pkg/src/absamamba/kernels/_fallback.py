"""Pure-numpy versions of the compiled kernels (same signatures, same results)."""

from __future__ import annotations

import numpy as np


def scan_forward(dA: np.ndarray, dBx: np.ndarray, C: np.ndarray):
    nb, L, D, N = dA.shape
    hs = np.empty((nb, L, D, N))
    h = np.zeros((nb, D, N))
    for t in range(L):
        h = dA[:, t] * h + dBx[:, t]
        hs[:, t] = h
    y = np.einsum("bldn,bldn->bld", C, hs)
    return y, hs


def scan_backward(dA: np.ndarray, C: np.ndarray, hs: np.ndarray, gy: np.ndarray):
    nb, L, D, N = dA.shape
    gdA = np.zeros((nb, L, D, N))
    gdBx = np.empty((nb, L, D, N))
    gC = gy[..., None] * hs
    gh = np.zeros((nb, D, N))
    for t in range(L - 1, -1, -1):
        g = gh + gy[:, t, :, None] * C[:, t]
        gdBx[:, t] = g
        if t > 0:
            gdA[:, t] = g * hs[:, t - 1]
        gh = g * dA[:, t]
    return gdA, gdBx, gC


def bspline_basis(x: np.ndarray, knots: np.ndarray, degree: int):
    k = degree
    K = knots.shape[0]
    nbasis = K - k - 1
    lo, hi = knots[k], knots[K - k - 1]
    clamped = (x < lo) | (x > hi)
    xc = np.clip(x, lo, hi)[:, None]
    span = np.clip(np.searchsorted(knots, xc[:, 0], side="right") - 1, k, nbasis - 1)
    B = np.zeros((x.shape[0], K - 1))
    B[np.arange(x.shape[0]), span] = 1.0
    prev = B
    with np.errstate(invalid="ignore", divide="ignore"):
        for p in range(1, k + 1):
            if p == k:
                prev = B
            left = (xc - knots[: -(p + 1)]) / (knots[p:-1] - knots[: -(p + 1)]) * B[:, :-1]
            right = (knots[p + 1 :] - xc) / (knots[p + 1 :] - knots[1:-p]) * B[:, 1:]
            B = left + right
    i = np.arange(nbasis)
    deriv = k / (knots[i + k] - knots[i]) * prev[:, :-1] - k / (knots[i + k + 1] - knots[i + 1]) * prev[:, 1:]
    deriv[clamped] = 0.0
    return B, deriv
