"""Adam with bias correction and the cosine learning-rate schedule."""

from __future__ import annotations

import numpy as np

from ..errors import ArgumentError


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.99, eps=1e-5, bias-corrected)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.99, eps=1e-5):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - (lr * update).astype(p.data.dtype)


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Half-cosine decay from ``base_lr`` at step 0 to 0 at ``total_steps``."""
    if total_steps <= 0:
        raise ArgumentError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ArgumentError(f"step {step} outside [0,{total_steps}]")
    return base_lr * (1.0 + np.cos(np.pi * step / total_steps)) / 2.0
