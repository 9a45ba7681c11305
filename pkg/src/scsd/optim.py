"""Adam with decoupled weight decay, written against diffcore tensors."""

from __future__ import annotations

import numpy as np


class AdamW:
    """theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * decay * theta."""

    def __init__(self, named_params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-3):
        self.params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {name: np.zeros_like(p.values) for name, p in self.params}
        self._v = {name: np.zeros_like(p.values) for name, p in self.params}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.values
            p.values -= self.lr * update

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()
