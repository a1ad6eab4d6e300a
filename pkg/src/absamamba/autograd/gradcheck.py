"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


class NonFiniteError(FloatingPointError):
    """A loss or gradient evaluated to NaN or infinity."""


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients of ``f()`` with central differences.

    ``f`` takes no arguments and must read the current values of ``params``
    (which are perturbed in place and restored).  Returns
    ``max |analytic - numeric| / max(1, |analytic|)`` over every checked element.

    ``max_elements`` caps the number of checked coordinates per parameter;
    the subset is drawn from ``rng``.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps must lie in [1e-7, 1e-4], got {eps}")
    for p in params:
        p.grad = None
        if not p.data.flags.c_contiguous or not p.data.flags.writeable:
            p.data = np.ascontiguousarray(p.data).copy()
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise NonFiniteError("loss is not finite at the base point")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for a in analytic:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("analytic gradient contains non-finite values")

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_elements is not None and flat.size > max_elements:
                idx = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                up = f().item()
                flat[i] = orig - eps
                down = f().item()
                flat[i] = orig
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise NonFiniteError(f"loss not finite when perturbing element {i}")
                numeric = (up - down) / (2.0 * eps)
                ai = a.reshape(-1)[i]
                worst = max(worst, abs(ai - numeric) / max(1.0, abs(ai)))
    return worst
