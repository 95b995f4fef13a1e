from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from mtorl.utils.errors import ConfigError


class Adam:
    """
    Adam with optional L2 weight decay, updating parameter arrays in place.

    With ``lr == 0`` parameters are left bit-for-bit unchanged.
    """

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if lr < 0:
            raise ConfigError(f"training.lr must be >= 0 (got {lr})")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"Adam betas must be in [0, 1) (got {beta1}, {beta2})")
        if weight_decay < 0:
            raise ConfigError(f"training.weight_decay must be >= 0 (got {weight_decay})")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self._m = {name: np.zeros_like(p) for name, p in params.items()}
        self._v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.steps += 1
        if self.lr == 0.0:
            return
        t = self.steps
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if self.weight_decay:
                g = g + self.weight_decay * p
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
