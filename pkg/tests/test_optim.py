"""Tests for optimizers and gradient clipping"""

import numpy as np
import pytest

from src.core.tensor import backward, leaf
from src.training.optim import Optimizer, clip_grad_norm, global_norm


class TestClipping:
    def test_global_norm(self):
        assert global_norm({"a": np.array([3.0]), "b": np.array([4.0])}) == pytest.approx(5.0)

    def test_clips_to_max_norm(self):
        grads, before = clip_grad_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        assert before == pytest.approx(5.0)
        assert global_norm(grads) == pytest.approx(1.0)
        assert grads["a"][0] == pytest.approx(0.6)

    def test_small_gradients_untouched(self):
        grads = {"a": np.array([0.1])}
        assert clip_grad_norm(grads, 1.0)[0] is grads
        assert clip_grad_norm(grads, None)[0] is grads


class TestOptimizer:
    """Each kind minimizes a quadratic"""

    @pytest.mark.parametrize("kind,lr", [("sgd", 0.1), ("momentum", 0.05), ("adam", 0.1)])
    def test_minimizes_quadratic(self, kind, lr):
        x = leaf(np.array([3.0, -2.0]))
        optimizer = Optimizer({"x": x}, kind=kind, learning_rate=lr)
        for _ in range(300):
            loss = ((x - 1.0) * (x - 1.0)).sum()
            optimizer.step({"x": backward(loss)[x]})
        assert np.allclose(x.value, 1.0, atol=1e-2)

    def test_sgd_step(self):
        x = leaf(np.array([1.0]))
        Optimizer({"x": x}, kind="sgd", learning_rate=0.5).step({"x": np.array([2.0])})
        assert x.value[0] == pytest.approx(0.0)

    def test_first_adam_step_has_learning_rate_size(self):
        x = leaf(np.array([0.0, 0.0]))
        Optimizer({"x": x}, kind="adam", learning_rate=0.01).step({"x": np.array([5.0, -0.2])})
        assert np.allclose(x.value, [-0.01, 0.01], atol=1e-6)

    def test_missing_gradient_skipped(self):
        x, y = leaf(np.array([1.0])), leaf(np.array([1.0]))
        Optimizer({"x": x, "y": y}, kind="sgd", learning_rate=1.0).step({"x": np.array([1.0])})
        assert x.value[0] == 0.0
        assert y.value[0] == 1.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Optimizer({}, kind="rmsprop")
