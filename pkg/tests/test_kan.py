import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from absamamba.autograd import ShapeError, Tensor, finite_diff_check
from absamamba.kan import (
    BSplineGrid,
    KanLayerParams,
    basis_and_derivative,
    bspline_basis,
    fit_spline_coefficients,
    kan_layer,
    kan_stack,
    spline_eval,
)


def cox_de_boor(i: int, p: int, x: float, t: np.ndarray) -> float:
    """Textbook recursive definition, half-open support [t_i, t_{i+1})."""
    if p == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    left = (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(i, p - 1, x, t)
    right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(i + 1, p - 1, x, t)
    return left + right


def interior(grid, n, rng):
    return rng.uniform(grid.t_min, grid.t_max, size=n)


GRIDS = [BSplineGrid.uniform(5, k) for k in (1, 2, 3, 4)] + [
    BSplineGrid(np.array([-2.0, -1.3, -1.0, 0.1, 0.4, 1.7, 2.0, 2.5, 3.1]), 2)
]


class TestGrid:
    def test_default_layout(self):
        g = BSplineGrid.uniform()
        assert g.degree == 3 and g.grid_size == 5 and g.n_basis == 8
        assert g.knots.size == 5 + 2 * 3 + 1
        assert (g.t_min, g.t_max) == (-3.0, 3.0)

    @pytest.mark.parametrize("knots", [[0, 1, 1, 2, 3, 4, 5, 6], [0, 1, 2, 3, 2.5, 5, 6, 7]])
    def test_degenerate(self, knots):
        with pytest.raises(ValueError):
            BSplineGrid(np.array(knots, dtype=float), 2)


class TestBasis:
    @pytest.mark.parametrize("grid", GRIDS)
    def test_matches_recursive_definition(self, grid, rng):
        for x in interior(grid, 40, rng):
            expected = [cox_de_boor(i, grid.degree, x, grid.knots) for i in range(grid.n_basis)]
            np.testing.assert_allclose(bspline_basis(x, grid), expected, atol=1e-13)

    @pytest.mark.parametrize("grid", GRIDS)
    def test_matches_scipy(self, grid, rng):
        x = interior(grid, 100, rng)
        for i in range(grid.n_basis):
            c = np.zeros(grid.n_basis)
            c[i] = 1.0
            ref = BSpline(grid.knots, c, grid.degree)
            np.testing.assert_allclose(bspline_basis(x, grid)[:, i], ref(x), atol=1e-13)
            _, deriv = basis_and_derivative(x, grid)
            np.testing.assert_allclose(deriv[:, i], ref.derivative()(x), atol=1e-11)

    @pytest.mark.parametrize("grid", GRIDS)
    def test_partition_of_unity(self, grid, rng):
        sums = bspline_basis(interior(grid, 1000, rng), grid).sum(axis=1)
        assert np.abs(sums - 1).max() <= 1e-12

    def test_degree_one_midpoint(self):
        g = BSplineGrid.uniform(4, 1, 0.0, 4.0)
        b = bspline_basis(1.5, g)
        nz = b[b > 0]
        np.testing.assert_allclose(nz, [0.5, 0.5], atol=1e-15)

    def test_clamping(self):
        g = BSplineGrid.uniform()
        np.testing.assert_array_equal(bspline_basis(7.5, g), bspline_basis(3.0, g))
        np.testing.assert_array_equal(bspline_basis(-100.0, g), bspline_basis(-3.0, g))
        _, d = basis_and_derivative(np.array([4.0, -4.0]), g)
        assert np.all(d == 0)

    @settings(max_examples=50)
    @given(st.floats(-10, 10), st.sampled_from(range(len(GRIDS))))
    def test_local_support(self, x, gi):
        g = GRIDS[gi]
        b = bspline_basis(x, g)
        assert np.count_nonzero(b) <= g.degree + 1
        assert np.all(b >= 0)

    def test_smooth_across_knots(self):
        g = BSplineGrid.uniform()
        c = np.random.default_rng(0).normal(size=g.n_basis)
        for knot in g.knots[g.degree + 1 : -g.degree - 1]:
            lo = spline_eval(knot - 1e-8, c, g).item()
            hi = spline_eval(knot + 1e-8, c, g).item()
            assert abs(lo - hi) < 1e-6


class TestSplineEval:
    def test_constant(self, rng):
        g = BSplineGrid.uniform()
        out = spline_eval(interior(g, 50, rng), np.full(g.n_basis, 2.0), g).data
        np.testing.assert_allclose(out, 2.0, atol=1e-12)

    def test_zero(self, rng):
        g = BSplineGrid.uniform()
        assert np.all(spline_eval(rng.normal(size=7), np.zeros(g.n_basis), g).data == 0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            spline_eval(0.0, np.ones(3), BSplineGrid.uniform())

    def test_coefficient_gradient_is_basis(self):
        g = BSplineGrid.uniform()
        c = Tensor(np.random.default_rng(2).normal(size=g.n_basis), requires_grad=True)
        spline_eval(Tensor(0.7), c, g).sum().backward()
        np.testing.assert_allclose(c.grad, bspline_basis(0.7, g), atol=1e-15)
        assert finite_diff_check(lambda: spline_eval(Tensor(0.7), c, g).sum(), [c]) < 1e-8

    def test_input_gradient(self, rng):
        g = BSplineGrid.uniform()
        x = Tensor(rng.uniform(-2.9, 2.9, size=6), requires_grad=True)
        c = Tensor(rng.normal(size=g.n_basis), requires_grad=True)
        assert finite_diff_check(lambda: (spline_eval(x, c, g) ** 2).sum(), [x, c]) < 1e-6


class TestKanLayer:
    def test_init_shapes(self, rng):
        p = KanLayerParams.init(4, 3, rng)
        assert p.coeffs.shape == (3, 4, 8) and p.base_weight is None
        assert p.coeffs.data.std() == pytest.approx(0.1, rel=0.3)

    def test_zero_coefficients(self, rng):
        p = KanLayerParams.init(4, 3, rng)
        p.coeffs.data[:] = 0
        assert np.all(kan_layer(rng.normal(size=(5, 4)), p).data == 0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            kan_layer(np.ones((2, 5)), KanLayerParams.init(4, 3, rng))

    def test_matches_per_edge_sum(self, rng):
        p = KanLayerParams.init(3, 2, rng)
        x = rng.uniform(-3, 3, size=(4, 3))
        y = kan_layer(x, p).data
        for q in range(2):
            expected = sum(spline_eval(x[:, i], p.coeffs.data[q, i], p.grid).data for i in range(3))
            np.testing.assert_allclose(y[:, q], expected, atol=1e-13)

    def test_identity_fit(self):
        g = BSplineGrid.uniform()
        xs = np.linspace(g.t_min, g.t_max, 400)
        c = fit_spline_coefficients(xs, xs, g)
        p = KanLayerParams(1, 1, c.reshape(1, 1, -1), g)
        probe = np.linspace(-2.99, 2.99, 1000)[:, None]
        assert np.abs(kan_layer(probe, p).data - probe).max() < 1e-3

    def test_separable_sin_cos_fit(self):
        g = BSplineGrid.uniform(20, 3)
        xs = np.linspace(-3, 3, 800)
        coeffs = np.stack([fit_spline_coefficients(xs, np.sin(xs), g), fit_spline_coefficients(xs, np.cos(xs), g)])
        p = KanLayerParams(2, 1, coeffs[None], g)
        probe = np.random.default_rng(5).uniform(-2.9, 2.9, size=(500, 2))
        err = np.abs(kan_layer(probe, p).data[:, 0] - (np.sin(probe[:, 0]) + np.cos(probe[:, 1])))
        assert err.max() < 1e-3

    def test_linear_in_coefficients(self, rng):
        g = BSplineGrid.uniform()
        c1, c2 = rng.normal(size=(2, 3, 8)), rng.normal(size=(2, 3, 8))
        x = rng.normal(size=(6, 3)) * 2
        layer = lambda c: kan_layer(x, KanLayerParams(3, 2, c, g)).data  # noqa: E731
        np.testing.assert_allclose(layer(c1 + c2), layer(c1) + layer(c2), atol=1e-12)

    def test_gradients(self, rng):
        p = KanLayerParams.init(3, 2, rng)
        x = Tensor(rng.uniform(-2.9, 2.9, size=(4, 3)), requires_grad=True)
        assert finite_diff_check(lambda: (kan_layer(x, p) ** 2).sum(), [x, p.coeffs]) < 1e-5

    def test_base_branch(self, rng):
        p = KanLayerParams.init(3, 2, rng, base_branch=True)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        assert finite_diff_check(lambda: (kan_layer(x, p) ** 2).sum(), [x, p.coeffs, p.base_weight]) < 1e-5


class TestKanStack:
    def test_single_layer(self, rng):
        p = KanLayerParams.init(3, 2, rng)
        x = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(kan_stack(x, [p]).data, kan_layer(x, p).data)

    def test_zero_last_layer(self, rng):
        a, b = KanLayerParams.init(3, 4, rng), KanLayerParams.init(4, 2, rng)
        b.coeffs.data[:] = 0
        assert np.all(kan_stack(rng.normal(size=(4, 3)), [a, b]).data == 0)

    def test_chain_mismatch(self, rng):
        with pytest.raises(ShapeError):
            kan_stack(np.ones((1, 3)), [KanLayerParams.init(3, 4, rng), KanLayerParams.init(3, 2, rng)])

    def test_two_layer_gradients(self, rng):
        a, b = KanLayerParams.init(3, 4, rng, std=0.5), KanLayerParams.init(4, 2, rng)
        x = Tensor(rng.uniform(-2.5, 2.5, size=(5, 3)), requires_grad=True)
        assert finite_diff_check(lambda: (kan_stack(x, [a, b]) ** 2).sum(), [x, a.coeffs, b.coeffs]) < 1e-5
