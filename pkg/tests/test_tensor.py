"""Tests for the reverse-mode autodiff tape"""

import numpy as np
import pytest

from src.core.errors import GradientError, ShapeError
from src.core.tensor import (
    backward,
    concat,
    constant,
    exp,
    floor_at,
    leaf,
    log,
    matmul,
    ramp,
    relu,
    sigmoid,
    softmax,
    sqrt,
    square,
    swapaxes,
)

from helpers import check_gradient


class TestForward:
    """Primitive values"""

    def test_softmax_uniform(self):
        assert np.allclose(softmax(constant([0.0, 0.0, 0.0])).value, [1 / 3] * 3)

    def test_ramp(self):
        assert ramp(constant(-2.5)).item() == 0.0
        assert ramp(constant(2.5)).item() == 2.5

    def test_matmul_identity(self):
        X = np.random.default_rng(0).normal(size=(3, 4))
        assert np.allclose(matmul(constant(np.eye(3)), constant(X)).value, X)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))

    def test_log_clamps(self):
        assert np.isfinite(log(constant(0.0)).item())

    def test_sigmoid_is_stable_far_from_center(self):
        out = sigmoid(constant([-1e4, 1e4]), sharpness=100.0, center=0.5).value
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0)
        assert out[1] == pytest.approx(1.0)

    def test_floor_at(self):
        assert floor_at(constant([1e-9, 0.5]), 1e-4).value.tolist() == [1e-4, 0.5]

    def test_item_of_single_element(self):
        assert constant([[3.5]]).item() == 3.5

    def test_item_rejects_non_scalar(self):
        with pytest.raises(ValueError, match="single-element"):
            constant([1.0, 2.0]).item()
        with pytest.raises(ValueError):
            constant(np.zeros((0,))).item()


class TestBackward:
    """Gradients against hand values and finite differences"""

    def test_square_at_three(self):
        x = leaf(3.0)
        assert backward(square(x))[x] == pytest.approx(6.0)

    def test_softmax_sum_has_zero_gradient(self):
        x = leaf([0.3, -1.2, 2.0])
        grad = backward(softmax(x).sum())[x]
        assert np.allclose(grad, 0.0, atol=1e-12)

    def test_non_scalar_root(self):
        with pytest.raises(GradientError):
            backward(leaf([1.0, 2.0]) * 2.0)

    def test_constant_root_has_no_gradients(self):
        assert backward(constant(1.0) * 2.0) == {}

    def test_shared_subexpression_accumulates(self):
        x = leaf(2.0)
        y = x * x + x
        assert backward(y)[x] == pytest.approx(5.0)

    @pytest.mark.parametrize(
        "build",
        [
            lambda x: (exp(x) * 0.5).sum(),
            lambda x: log(x * x + 1.0).sum(),
            lambda x: sigmoid(x, sharpness=3.0, center=0.2).sum(),
            lambda x: (softmax(x) * np.arange(4.0)).sum(),
            lambda x: sqrt(x * x + 0.5).sum(),
            lambda x: (x / (x * x + 2.0)).sum(),
            lambda x: (x[1:] - x[:-1]).sum() + (x * x).mean(),
            lambda x: concat([x, x * 2.0]).sum(),
            lambda x: (x.reshape(2, 2) @ x.reshape(2, 2)).sum(),
            lambda x: swapaxes(x.reshape(2, 2), 0, 1)[0, :].sum(),
        ],
    )
    def test_primitives_match_finite_differences(self, build):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.uniform(0.2, 1.5, size=4)
            assert check_gradient(build, x) < 1e-4

    def test_two_layer_mlp(self):
        rng = np.random.default_rng(5)
        W1, W2 = rng.normal(size=(3, 6)), rng.normal(size=(6, 1))
        x = rng.normal(size=(2, 3))

        def build(w):
            hidden = relu(constant(x) @ w.reshape(3, 6) + 0.1)
            return (hidden @ constant(W2)).sum()

        assert check_gradient(build, W1) < 1e-4

    def test_broadcast_gradient_reduced_to_operand_shape(self):
        bias = leaf(np.zeros(3))
        y = (constant(np.ones((4, 3))) + bias).sum()
        assert np.allclose(backward(y)[bias], [4.0, 4.0, 4.0])
