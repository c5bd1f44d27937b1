"""In-place first-order optimizers over named tape leaves"""

import logging
from typing import Literal, Optional

import numpy as np

from src.core.tensor import Node

logger = logging.getLogger(__name__)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: Optional[float]) -> tuple[dict[str, np.ndarray], float]:
    """
    Rescale all gradients together so their global L2 norm is at most
    max_norm. Returns the (possibly new) gradients and the norm before
    clipping.
    """
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or not np.isfinite(norm):
        return grads, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


class Optimizer:
    """
    sgd:      p <- p - lr g
    momentum: v <- beta v + g;  p <- p - lr v
    adam:     standard bias-corrected Adam (beta1=0.9, beta2=0.999)
    """

    def __init__(
        self,
        parameters: dict[str, Node],
        kind: Literal["sgd", "momentum", "adam"] = "sgd",
        learning_rate: float = 1e-3,
        momentum: float = 0.9,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if kind not in ("sgd", "momentum", "adam"):
            raise ValueError(f"Unknown optimizer: {kind}")
        self.parameters = parameters
        self.kind = kind
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.betas = betas
        self.eps = eps
        self.steps = 0
        self._first: dict[str, np.ndarray] = {}
        self._second: dict[str, np.ndarray] = {}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        """Apply one update; parameters without a gradient are left alone"""
        self.steps += 1
        lr = self.learning_rate
        for name, param in self.parameters.items():
            g = grads.get(name)
            if g is None:
                continue
            if self.kind == "sgd":
                update = g
            elif self.kind == "momentum":
                velocity = self._first.get(name)
                velocity = g if velocity is None else self.momentum * velocity + g
                self._first[name] = velocity
                update = velocity
            else:
                beta1, beta2 = self.betas
                m = beta1 * self._first.get(name, np.zeros_like(g)) + (1.0 - beta1) * g
                v = beta2 * self._second.get(name, np.zeros_like(g)) + (1.0 - beta2) * g * g
                self._first[name], self._second[name] = m, v
                m_hat = m / (1.0 - beta1 ** self.steps)
                v_hat = v / (1.0 - beta2 ** self.steps)
                update = m_hat / (np.sqrt(v_hat) + self.eps)
            param.value = param.value - lr * update
