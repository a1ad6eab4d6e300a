# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: diagonal SSM scan (forward/backward) and B-spline bases.

Array arguments may be zero-stride broadcast views; outputs are fresh
C-contiguous float64 arrays.
"""

import numpy as np


def scan_forward(const double[:, :, :, :] dA,
                 const double[:, :, :, :] dBx,
                 const double[:, :, :, :] C):
    """h[t] = dA[t] * h[t-1] + dBx[t];  y[t, d] = sum_n C[t, d, n] * h[t, d, n]."""
    cdef Py_ssize_t nb = dA.shape[0], L = dA.shape[1], D = dA.shape[2], N = dA.shape[3]
    cdef Py_ssize_t b, t, d, n
    cdef double h, acc
    y_arr = np.zeros((nb, L, D), dtype=np.float64)
    hs_arr = np.empty((nb, L, D, N), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef double[:, :, :, ::1] hs = hs_arr
    with nogil:
        for b in range(nb):
            for d in range(D):
                for n in range(N):
                    hs[b, 0, d, n] = dBx[b, 0, d, n]
            for t in range(1, L):
                for d in range(D):
                    for n in range(N):
                        hs[b, t, d, n] = dA[b, t, d, n] * hs[b, t - 1, d, n] + dBx[b, t, d, n]
            for t in range(L):
                for d in range(D):
                    acc = 0.0
                    for n in range(N):
                        acc = acc + C[b, t, d, n] * hs[b, t, d, n]
                    y[b, t, d] = acc
    return y_arr, hs_arr


def scan_backward(const double[:, :, :, :] dA,
                  const double[:, :, :, :] C,
                  const double[:, :, :, :] hs,
                  const double[:, :, :] gy):
    """Reverse sweep of :func:`scan_forward`; returns (g_dA, g_dBx, g_C) at full shape."""
    cdef Py_ssize_t nb = dA.shape[0], L = dA.shape[1], D = dA.shape[2], N = dA.shape[3]
    cdef Py_ssize_t b, t, d, n
    cdef double g, gyv
    gdA_arr = np.zeros((nb, L, D, N), dtype=np.float64)
    gdBx_arr = np.empty((nb, L, D, N), dtype=np.float64)
    gC_arr = np.empty((nb, L, D, N), dtype=np.float64)
    gh_arr = np.zeros((D, N), dtype=np.float64)
    cdef double[:, :, :, ::1] gdA = gdA_arr
    cdef double[:, :, :, ::1] gdBx = gdBx_arr
    cdef double[:, :, :, ::1] gC = gC_arr
    cdef double[:, ::1] gh = gh_arr
    with nogil:
        for b in range(nb):
            for d in range(D):
                for n in range(N):
                    gh[d, n] = 0.0
            for t in range(L - 1, -1, -1):
                for d in range(D):
                    gyv = gy[b, t, d]
                    for n in range(N):
                        g = gh[d, n] + gyv * C[b, t, d, n]
                        gdBx[b, t, d, n] = g
                        gC[b, t, d, n] = gyv * hs[b, t, d, n]
                        if t > 0:
                            gdA[b, t, d, n] = g * hs[b, t - 1, d, n]
                        gh[d, n] = g * dA[b, t, d, n]
    return gdA_arr, gdBx_arr, gC_arr


def bspline_basis(const double[::1] x, const double[::1] knots, int degree):
    """Cox-de Boor bases and their x-derivatives for every point in ``x``.

    Points are clamped to ``[knots[degree], knots[K-degree-1]]``; clamped
    points get a zero derivative.  Returns two ``(M, K-degree-1)`` arrays.
    """
    cdef Py_ssize_t M = x.shape[0], K = knots.shape[0]
    cdef int k = degree
    cdef Py_ssize_t nbasis = K - k - 1
    cdef double lo = knots[k], hi = knots[K - k - 1]
    basis_arr = np.zeros((M, nbasis), dtype=np.float64)
    deriv_arr = np.zeros((M, nbasis), dtype=np.float64)
    cdef double[:, ::1] basis = basis_arr
    cdef double[:, ::1] deriv = deriv_arr
    left_arr = np.empty(k + 1, dtype=np.float64)
    right_arr = np.empty(k + 1, dtype=np.float64)
    vals_arr = np.empty(k + 1, dtype=np.float64)
    prev_arr = np.empty(k + 1, dtype=np.float64)
    cdef double[::1] left = left_arr
    cdef double[::1] right = right_arr
    cdef double[::1] vals = vals_arr
    cdef double[::1] prev = prev_arr
    cdef Py_ssize_t m, s, j, r, i, lo_span, hi_span, mid
    cdef double xv, saved, temp, a, c
    cdef bint clamped
    with nogil:
        for m in range(M):
            xv = x[m]
            clamped = False
            if xv < lo:
                xv = lo
                clamped = True
            elif xv > hi:
                xv = hi
                clamped = True
            # span s with knots[s] <= xv < knots[s+1], s in [k, nbasis-1]
            if xv >= knots[nbasis]:
                s = nbasis - 1
            else:
                lo_span = k
                hi_span = nbasis
                while hi_span - lo_span > 1:
                    mid = (lo_span + hi_span) // 2
                    if xv < knots[mid]:
                        hi_span = mid
                    else:
                        lo_span = mid
                s = lo_span
            vals[0] = 1.0
            prev[0] = 1.0
            for j in range(1, k + 1):
                if j == k:
                    for r in range(k):
                        prev[r] = vals[r]
                left[j] = xv - knots[s + 1 - j]
                right[j] = knots[s + j] - xv
                saved = 0.0
                for r in range(j):
                    temp = vals[r] / (right[r + 1] + left[j - r])
                    vals[r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                vals[j] = saved
            for r in range(k + 1):
                basis[m, s - k + r] = vals[r]
            if clamped:
                continue
            # prev[r] holds degree-(k-1) basis index s-k+1+r
            for r in range(k + 1):
                i = s - k + r
                a = 0.0
                c = 0.0
                if r >= 1:
                    a = k / (knots[i + k] - knots[i]) * prev[r - 1]
                if r <= k - 1:
                    c = k / (knots[i + k + 1] - knots[i + 1]) * prev[r]
                deriv[m, i] = a - c
    return basis_arr, deriv_arr
