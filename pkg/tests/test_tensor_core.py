"""Tensor ops against scalar / brute-force oracles, plus FLOPs metering."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duca import FlopsMeter, Tensor, cosine_similarity, gelu, layer_norm, matmul, softmax_rows
from duca.errors import DegenerateInputError, NumericError, ShapeError
from duca.tensor_core import (
    GELU_FLOPS_PER_ELEM,
    LAYER_NORM_FLOPS_PER_ELEM,
    SOFTMAX_FLOPS_PER_ELEM,
)


def random_tensor(shape, seed):
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


class TestTensor:
    def test_shape_data_consistency(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert math.prod(t.shape) == len(t.data)
        assert t.data.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_explicit_shape(self):
        t = Tensor([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], shape=(2, 3))
        assert t.shape == (2, 3)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0, 3.0], shape=(2, 2))

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            Tensor([1.0, float("nan")])
        with pytest.raises(NumericError):
            Tensor([1.0, float("inf")])

    def test_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.numpy()[0] = 5.0


class TestFlopsMeter:
    def test_monotone(self):
        m = FlopsMeter()
        m.add(5)
        m.add(0)
        assert m.total == 5
        with pytest.raises(ValueError):
            m.add(-1)

    def test_reset(self):
        m = FlopsMeter()
        m.add(7)
        m.reset()
        assert m.total == 0


class TestMatmul:
    def test_ones_product_and_count(self):
        m = FlopsMeter()
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.ones((3, 4)))
        out = matmul(a, b, m)
        assert out.shape == (2, 4)
        np.testing.assert_array_equal(out.numpy(), np.full((2, 4), 3.0))
        assert m.total == 2 * 2 * 3 * 4

    def test_identity(self):
        a = random_tensor((5, 5), seed=3)
        out = matmul(a, Tensor(np.eye(5)))
        np.testing.assert_array_equal(out.numpy(), a.numpy())

    def test_against_triple_loop(self):
        rng = np.random.default_rng(11)
        a, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        expected = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    expected[i, j] += a[i, k] * b[k, j]
        out = matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-12, rtol=0)

    def test_shape_mismatch_names_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))

    def test_composite_metering_sums(self):
        # meter of a chain equals the sum of the analytic per-matmul counts
        m = FlopsMeter()
        a = random_tensor((4, 6), 1)
        b = random_tensor((6, 5), 2)
        c = random_tensor((5, 2), 3)
        matmul(matmul(a, b, m), c, m)
        assert m.total == 2 * 4 * 6 * 5 + 2 * 4 * 5 * 2


class TestSoftmaxRows:
    def test_uniform_row(self):
        out = softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.numpy(), [[1 / 3] * 3], atol=1e-12)

    def test_no_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]]))
        np.testing.assert_allclose(out.numpy(), [[1.0, 0.0]], atol=1e-9)

    def test_scalar_oracle(self):
        row = [1.0, 2.0, 3.0]
        exps = [math.exp(v - 3.0) for v in row]
        expected = [e / sum(exps) for e in exps]
        out = softmax_rows(Tensor([row]))
        np.testing.assert_allclose(out.numpy()[0], expected, atol=1e-12, rtol=0)

    def test_flops(self):
        m = FlopsMeter()
        softmax_rows(random_tensor((3, 7), 5), m)
        assert m.total == SOFTMAX_FLOPS_PER_ELEM * 21

    @given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 8))
    def test_rows_sum_to_one(self, seed, rows, cols):
        x = np.random.default_rng(seed).standard_normal((rows, cols)) * 10
        out = softmax_rows(Tensor(x)).numpy()
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), np.ones(rows), atol=1e-6)


class TestLayerNorm:
    def test_constant_row_zeroed(self):
        out = layer_norm(Tensor([[1.0, 1.0, 1.0, 1.0]]))
        np.testing.assert_allclose(out.numpy(), np.zeros((1, 4)), atol=1e-12)

    def test_already_normalized(self):
        out = layer_norm(Tensor([[-1.0, 1.0]]))
        np.testing.assert_allclose(out.numpy(), [[-1.0, 1.0]], atol=1e-5)

    def test_two_pass_oracle(self):
        rng = np.random.default_rng(9)
        row = rng.standard_normal(16)
        mean = sum(row) / 16
        var = sum((v - mean) ** 2 for v in row) / 16
        expected = [(v - mean) / math.sqrt(var + 1e-5) for v in row]
        out = layer_norm(Tensor([row]))
        np.testing.assert_allclose(out.numpy()[0], expected, atol=1e-10, rtol=0)

    def test_moments(self):
        x = random_tensor((5, 32), 4)
        out = layer_norm(x).numpy()
        np.testing.assert_allclose(out.mean(axis=1), np.zeros(5), atol=1e-5)
        np.testing.assert_allclose(out.var(axis=1), np.ones(5), atol=1e-4)

    def test_degenerate_width(self):
        with pytest.raises(DegenerateInputError):
            layer_norm(Tensor([[1.0]]))

    def test_flops(self):
        m = FlopsMeter()
        layer_norm(random_tensor((4, 8), 2), m)
        assert m.total == LAYER_NORM_FLOPS_PER_ELEM * 32

    @given(st.integers(0, 2**32 - 1), st.floats(-100, 100))
    def test_shift_invariant(self, seed, c):
        x = np.random.default_rng(seed).standard_normal((3, 12))
        a = layer_norm(Tensor(x)).numpy()
        b = layer_norm(Tensor(x + c)).numpy()
        np.testing.assert_allclose(a, b, atol=1e-5)


class TestCosineSimilarity:
    def test_self(self):
        v = Tensor([1.0, 2.0, -3.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_negated(self):
        v = Tensor([1.0, 2.0, -3.0])
        w = Tensor([-1.0, -2.0, 3.0])
        assert cosine_similarity(v, w) == pytest.approx(-1.0, abs=1e-12)

    def test_scalar_case(self):
        got = cosine_similarity(Tensor([1.0, 0.0]), Tensor([1.0, 1.0]))
        assert got == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_zero_vector(self):
        assert cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 2.0])) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            cosine_similarity(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    @given(st.integers(0, 2**32 - 1),
           st.floats(0.01, 100.0), st.floats(0.01, 100.0))
    def test_scale_invariant(self, seed, alpha, beta):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal(8), rng.standard_normal(8)
        s1 = cosine_similarity(Tensor(a), Tensor(b))
        s2 = cosine_similarity(Tensor(alpha * a), Tensor(beta * b))
        assert s1 == pytest.approx(s2, abs=1e-9)


class TestGelu:
    def test_zero(self):
        assert gelu(Tensor([0.0])).numpy()[0] == 0.0

    def test_large_positive_asymptote(self):
        x = 8.0
        got = gelu(Tensor([x])).numpy()[0]
        assert got == pytest.approx(x, rel=1e-3)

    def test_scalar_oracle_at_one(self):
        x = 1.0
        expected = 0.5 * x * (1 + math.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
        assert gelu(Tensor([x])).numpy()[0] == pytest.approx(expected, abs=1e-10)

    def test_flops(self):
        m = FlopsMeter()
        gelu(random_tensor((2, 5), 1), m)
        assert m.total == GELU_FLOPS_PER_ELEM * 10
