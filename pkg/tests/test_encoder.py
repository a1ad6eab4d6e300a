import numpy as np
import pytest

from absamamba.autograd import ShapeError, Tensor, finite_diff_check
from absamamba.encoder import (
    BiLstm,
    EmbeddingTables,
    bilstm,
    embed,
    extract_aspect,
    load_word_vectors,
)


@pytest.fixture
def tables(rng):
    return EmbeddingTables(10, 12, 5, rng)


class TestEmbed:
    def test_shape(self, tables):
        out = embed([3, 4], [1, 2], [1, 1], tables)
        assert out.shape == (2, 360)

    def test_padding_is_zero(self, tables):
        out = embed([0], [0], [0], tables)
        assert np.all(out.data == 0)

    def test_same_word_different_position(self, tables):
        out = embed([5, 5], [1, 5], [2, 2], tables).data
        np.testing.assert_array_equal(out[0, :300], out[1, :300])
        assert not np.array_equal(out[0, 300:330], out[1, 300:330])

    def test_out_of_range(self, tables):
        with pytest.raises(IndexError):
            embed([10], [1], [1], tables)

    def test_index_shape_mismatch(self, tables):
        with pytest.raises(ShapeError):
            embed([1, 2], [1], [1, 1], tables)

    def test_word_table_init(self, rng):
        t = EmbeddingTables(2000, 4, 3, rng)
        assert t.word.data[1:].std() == pytest.approx(0.1, rel=0.05)

    def test_load_word_vectors(self, tmp_path, rng):
        t = EmbeddingTables(4, 4, 3, rng, word_dim=3)
        path = tmp_path / "vec.txt"
        path.write_text("good 1 2 3\nunknown 9 9 9\nshort 1\n<pad> 5 5 5\n")
        filled = load_word_vectors(path, {"<pad>": 0, "<unk>": 1, "good": 2, "short": 3}, t.word)
        assert filled == 1
        np.testing.assert_array_equal(t.word.data[2], [1, 2, 3])
        assert np.all(t.word.data[0] == 0)


class TestBiLstm:
    def test_shape(self, rng):
        p = BiLstm(360, 50, rng)
        assert bilstm(rng.normal(size=(7, 360)), p).shape == (7, 100)
        assert p.out_dim == 100

    def test_zero_weights(self, rng):
        p = BiLstm(6, 4, rng)
        for t in p.parameters():
            t.data[:] = 0
        assert np.all(bilstm(rng.normal(size=(5, 6)), p).data == 0)

    def test_reversal_swaps_halves(self, rng):
        p = BiLstm(3, 4, rng)
        p.bwd.w_ih.data[:] = p.fwd.w_ih.data
        p.bwd.w_hh.data[:] = p.fwd.w_hh.data
        p.bwd.bias.data[:] = p.fwd.bias.data
        x = rng.normal(size=(6, 3))
        out = bilstm(x, p).data
        rev = bilstm(x[::-1].copy(), p).data
        np.testing.assert_allclose(rev[::-1, :4], out[:, 4:], atol=1e-14)
        np.testing.assert_allclose(rev[::-1, 4:], out[:, :4], atol=1e-14)

    def test_matches_reference_cell(self, rng):
        """Plain loop oracle for the forward direction."""
        p = BiLstm(3, 2, rng)
        x = rng.normal(size=(4, 3))
        sig = lambda z: 1 / (1 + np.exp(-z))  # noqa: E731
        h, c, ref = np.zeros(2), np.zeros(2), []
        for t in range(4):
            a = p.fwd.w_ih.data @ x[t] + p.fwd.w_hh.data @ h + p.fwd.bias.data
            i, f, g, o = sig(a[:2]), sig(a[2:4]), np.tanh(a[4:6]), sig(a[6:])
            c = f * c + i * g
            h = o * np.tanh(c)
            ref.append(h)
        np.testing.assert_allclose(bilstm(x, p).data[:, :2], ref, atol=1e-14)

    def test_every_position_matters(self, rng):
        p = BiLstm(3, 4, rng)
        x = rng.normal(size=(4, 3))
        base = bilstm(x, p).data
        for t in range(4):
            x2 = x.copy()
            x2[t] += 1.0
            assert np.all(np.abs(bilstm(x2, p).data - base).max(axis=1) > 0)

    def test_padding_isolated(self, rng):
        p = BiLstm(3, 4, rng)
        x = rng.normal(size=(1, 4, 3))
        padded = np.concatenate([x, rng.normal(size=(1, 3, 3))], axis=1)
        mask = np.array([[True] * 4 + [False] * 3])
        out = bilstm(padded, p, mask).data
        np.testing.assert_allclose(out[:, :4], bilstm(x, p).data, atol=1e-14)
        assert np.all(out[:, 4:] == 0)

    def test_gradients(self, rng):
        p = BiLstm(3, 2, rng, init_range=0.5)
        x = Tensor(rng.normal(size=(2, 3, 3)), requires_grad=True)
        mask = np.array([[1, 1, 1], [1, 1, 0]], dtype=bool)
        w = Tensor(rng.normal(size=(2, 3, 4)))
        err = finite_diff_check(lambda: (bilstm(x, p, mask) * w).sum(), [x, *p.parameters()])
        assert err < 1e-6

    def test_bad_rank(self, rng):
        with pytest.raises(ShapeError):
            bilstm(np.ones(3), BiLstm(3, 2, rng))


class TestExtractAspect:
    def test_full_span(self, rng):
        H = Tensor(rng.normal(size=(5, 4)))
        np.testing.assert_array_equal(extract_aspect(H, (0, 5)).data, H.data)

    def test_single_row(self, rng):
        H = Tensor(rng.normal(size=(5, 4)))
        np.testing.assert_array_equal(extract_aspect(H, (2, 3)).data, H.data[2:3])

    @pytest.mark.parametrize("span", [(2, 2), (3, 1), (-1, 2), (0, 6)])
    def test_invalid(self, rng, span):
        with pytest.raises(ValueError):
            extract_aspect(Tensor(rng.normal(size=(5, 4))), span)
