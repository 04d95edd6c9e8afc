"""Adam with decoupled weight decay."""

from __future__ import annotations

import numpy as np


class AdamW:
    """Moment-based updates plus a decay applied straight to the parameters.

    Each step does ``theta <- theta * (1 - weight_decay) - lr * m_hat / (sqrt(v_hat) + eps)``.
    The decay is not scaled by the learning rate, so ``weight_decay`` is the
    per-step shrink factor regardless of ``lr``.
    """

    def __init__(self, lr: float, weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr < 0 or not 0 <= weight_decay < 1:
            raise ValueError(f"invalid lr={lr} or weight_decay={weight_decay}")
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, theta in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(theta)
                self.v[name] = np.zeros_like(theta)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay:
                theta *= 1.0 - self.weight_decay
            theta -= self.lr * ((m / c1) / (np.sqrt(v / c2) + self.eps))
