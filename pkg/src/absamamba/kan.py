"""Kolmogorov-Arnold layers with learnable B-spline edge functions.

A layer maps ``n_in`` inputs to ``n_out`` outputs through ``n_out * n_in``
independent univariate splines, ``y_q = sum_p phi_{q,p}(x_p)``, where each
``phi_{q,p}(x) = sum_i c[q, p, i] * B_i(x)`` on a shared knot vector.
Inputs outside the grid are clamped to its boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .autograd import Tensor, as_tensor, make_result, silu
from .autograd.ops import linear
from .autograd.tensor import ShapeError


@dataclass(frozen=True)
class BSplineGrid:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        if self.degree < 1:
            raise ValueError(f"spline degree must be >= 1, got {self.degree}")
        if knots.ndim != 1 or knots.size < 2 * self.degree + 2:
            raise ValueError(f"need at least {2 * self.degree + 2} knots for degree {self.degree}")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("degenerate grid: knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(
        cls, grid_size: int = 5, degree: int = 3, t_min: float = -3.0, t_max: float = 3.0
    ) -> "BSplineGrid":
        """``grid_size`` equal intervals on ``[t_min, t_max]`` padded by ``degree`` knots per side."""
        if grid_size < 1 or not t_max > t_min:
            raise ValueError(f"invalid grid: size {grid_size} on [{t_min}, {t_max}]")
        h = (t_max - t_min) / grid_size
        knots = t_min + h * np.arange(-degree, grid_size + degree + 1)
        return cls(knots, degree)

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def grid_size(self) -> int:
        return self.n_basis - self.degree

    @property
    def t_min(self) -> float:
        return float(self.knots[self.degree])

    @property
    def t_max(self) -> float:
        return float(self.knots[-self.degree - 1])


def basis_and_derivative(x: np.ndarray, grid: BSplineGrid) -> tuple[np.ndarray, np.ndarray]:
    """Bases and d/dx for flat ``x``; both ``(x.size, n_basis)``."""
    flat = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1))
    return kernels.bspline_basis(flat, grid.knots, grid.degree)


def bspline_basis(x, grid: BSplineGrid) -> np.ndarray:
    """Cox-de Boor basis values at ``x``: shape ``(n_basis,)`` for a scalar, else ``(*x.shape, n_basis)``."""
    arr = np.asarray(x, dtype=np.float64)
    basis, _ = basis_and_derivative(arr, grid)
    return basis[0] if arr.ndim == 0 else basis.reshape(*arr.shape, grid.n_basis)


def spline_eval(x, coeffs, grid: BSplineGrid) -> Tensor:
    """``sum_i c_i B_i(x)``, elementwise over ``x``; differentiable in ``x`` and ``coeffs``."""
    x, coeffs = as_tensor(x), as_tensor(coeffs)
    if coeffs.shape != (grid.n_basis,):
        raise ShapeError(f"spline_eval: expected {grid.n_basis} coefficients, got {coeffs.shape}")
    basis, deriv = basis_and_derivative(x.data, grid)
    out = (basis @ coeffs.data).reshape(x.shape)

    def backward(g):
        gf = g.reshape(-1)
        gx = (gf * (deriv @ coeffs.data)).reshape(x.shape) if x.requires_grad else None
        gc = basis.T @ gf if coeffs.requires_grad else None
        return gx, gc

    return make_result(out, (x, coeffs), "spline_eval", backward)


@dataclass
class KanLayerParams:
    n_in: int
    n_out: int
    coeffs: Tensor  # (n_out, n_in, n_basis)
    grid: BSplineGrid = field(default_factory=BSplineGrid.uniform)
    base_weight: Tensor | None = None  # optional silu residual branch, (n_out, n_in)

    def __post_init__(self):
        self.coeffs = as_tensor(self.coeffs)
        expected = (self.n_out, self.n_in, self.grid.n_basis)
        if self.coeffs.shape != expected:
            raise ShapeError(f"KAN coefficients must be {expected}, got {self.coeffs.shape}")
        if self.base_weight is not None and self.base_weight.shape != (self.n_out, self.n_in):
            raise ShapeError(f"KAN base weight must be {(self.n_out, self.n_in)}")

    @classmethod
    def init(
        cls,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        grid: BSplineGrid | None = None,
        std: float = 0.1,
        base_branch: bool = False,
    ) -> "KanLayerParams":
        grid = grid or BSplineGrid.uniform()
        coeffs = Tensor(rng.normal(0.0, std, size=(n_out, n_in, grid.n_basis)), requires_grad=True)
        base = None
        if base_branch:
            bound = 1.0 / np.sqrt(n_in)
            base = Tensor(rng.uniform(-bound, bound, size=(n_out, n_in)), requires_grad=True)
        return cls(n_in, n_out, coeffs, grid, base)


def _spline_layer(x: Tensor, coeffs: Tensor, grid: BSplineGrid) -> Tensor:
    n_out, n_in, nb = coeffs.shape
    lead = x.shape[:-1]
    basis, deriv = basis_and_derivative(x.data, grid)
    basis = basis.reshape(-1, n_in, nb)
    out = basis.reshape(-1, n_in * nb) @ coeffs.data.reshape(n_out, -1).T

    def backward(g):
        g2 = g.reshape(-1, n_out)
        gx = gc = None
        if x.requires_grad:
            back = (g2 @ coeffs.data.reshape(n_out, -1)).reshape(-1, n_in, nb)
            gx = (back * deriv.reshape(-1, n_in, nb)).sum(axis=-1).reshape(x.shape)
        if coeffs.requires_grad:
            gc = (g2.T @ basis.reshape(-1, n_in * nb)).reshape(coeffs.shape)
        return gx, gc

    return make_result(out.reshape(*lead, n_out), (x, coeffs), "kan_layer", backward)


def kan_layer(x, params: KanLayerParams) -> Tensor:
    """``y_q = sum_p phi_{q,p}(x_p)`` over the trailing axis of ``x``."""
    x = as_tensor(x)
    if x.shape[-1] != params.n_in:
        raise ShapeError(f"kan_layer: input width {x.shape[-1]} != n_in {params.n_in}")
    y = _spline_layer(x, params.coeffs, params.grid)
    if params.base_weight is not None:
        y = y + linear(silu(x), params.base_weight)
    return y


def kan_stack(x, layers: Sequence[KanLayerParams]) -> Tensor:
    """Compose KAN layers: ``(Phi_{L-1} o ... o Phi_0)(x)``."""
    if not layers:
        raise ValueError("kan_stack needs at least one layer")
    for prev, nxt in zip(layers, layers[1:]):
        if prev.n_out != nxt.n_in:
            raise ShapeError(f"kan_stack: layer widths do not chain ({prev.n_out} -> {nxt.n_in})")
    y = as_tensor(x)
    for layer in layers:
        y = kan_layer(y, layer)
    return y


def fit_spline_coefficients(x: np.ndarray, y: np.ndarray, grid: BSplineGrid) -> np.ndarray:
    """Least-squares coefficients so that ``sum_i c_i B_i(x) ~= y``."""
    basis = bspline_basis(np.asarray(x, dtype=np.float64).reshape(-1), grid)
    coeffs, *_ = np.linalg.lstsq(basis, np.asarray(y, dtype=np.float64).reshape(-1), rcond=None)
    return coeffs
