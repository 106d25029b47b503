"""Adam with bias correction."""
from __future__ import annotations

import numpy as np


class Adam:
    """Adaptive-moment update over a list of :class:`~gddfuse.autodiff.Parameter`.

    Gradients are zeroed after each :meth:`step`.
    """

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def zero_grad(self):
        for p in self.params:
            p.grad = np.zeros_like(p.value)

    def step(self):
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            p.step += 1
            p.m *= b1
            p.m += (1.0 - b1) * g
            p.v *= b2
            p.v += (1.0 - b2) * (g * g)
            m_hat = p.m / (1.0 - b1 ** p.step)
            v_hat = p.v / (1.0 - b2 ** p.step)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = np.zeros_like(p.value)
