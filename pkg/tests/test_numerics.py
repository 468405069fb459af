import numpy as np
import pytest
from hypothesis import given, strategies as st

from tinymm.errors import ParameterError, ShapeError
from tinymm.numerics import finite_diff_grad, log_softmax_row, matmul, softmax_row
from tinymm.oracles import matmul_naive


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), a), a)

    def test_dot_product(self):
        out = matmul(np.array([[1.0, 0.0]]), np.array([[2.0], [3.0]]))
        assert out.shape == (1, 1)
        assert out[0, 0] == 2.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = rng.standard_normal((5, 5))
            b = rng.standard_normal((5, 5))
            np.testing.assert_allclose(matmul(a, b), matmul_naive(a, b), rtol=1e-12)

    def test_associative(self):
        rng = np.random.default_rng(3)
        a, b, c = (rng.standard_normal((4, 4)) for _ in range(3))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 2)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ParameterError):
            matmul(np.array([[np.nan, 1.0]]), np.ones((2, 1)))


class TestSoftmaxRow:
    def test_constant_input_uniform(self):
        np.testing.assert_allclose(softmax_row([3.3, 3.3, 3.3], tau=0.7), np.full(3, 1 / 3))

    def test_two_element_value(self):
        # direct scalar evaluation: e^2 / (e^2 + 1)
        got = softmax_row([2.0, 0.0], tau=1.0)
        np.testing.assert_allclose(got, [0.8808, 0.1192], atol=1e-4)

    def test_singleton(self):
        np.testing.assert_allclose(softmax_row([17.0]), [1.0])

    def test_tau_rescaling_identity(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal(6)
        np.testing.assert_allclose(
            softmax_row(v, tau=2.5), softmax_row(v / 2.5, tau=1.0), atol=1e-12
        )

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ParameterError):
            softmax_row([1.0, 2.0], tau=0.0)
        with pytest.raises(ParameterError):
            softmax_row([1.0, 2.0], tau=-1.0)

    def test_extreme_values_stable(self):
        p = softmax_row([1e6, 0.0, -1e6])
        assert np.all(np.isfinite(p))
        assert abs(p.sum() - 1.0) <= 1e-12

    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=12),
        st.floats(0.05, 20.0),
    )
    def test_probability_vector_property(self, vals, tau):
        p = softmax_row(vals, tau)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p >= 0.0) and np.all(p <= 1.0)

    def test_log_softmax_consistent(self):
        v = np.array([0.3, -2.2, 4.0])
        np.testing.assert_allclose(np.exp(log_softmax_row(v, 1.7)), softmax_row(v, 1.7), atol=1e-12)


class TestFiniteDiffGrad:
    def test_sum_of_squares(self):
        grad = finite_diff_grad(lambda x: float(np.sum(x**2)), np.array([1.0, 2.0]), h=1e-5)
        np.testing.assert_allclose(grad, [2.0, 4.0], atol=1e-6)

    def test_constant_function(self):
        grad = finite_diff_grad(lambda x: 3.14, np.array([0.5, -0.5, 2.0]))
        np.testing.assert_allclose(grad, np.zeros(3), atol=1e-12)

    def test_nonfinite_evaluation_raises(self):
        with pytest.raises(FloatingPointError):
            finite_diff_grad(lambda x: float("nan"), np.array([1.0]))

    def test_bad_step_raises(self):
        with pytest.raises(ParameterError):
            finite_diff_grad(lambda x: 0.0, np.array([1.0]), h=0.0)
