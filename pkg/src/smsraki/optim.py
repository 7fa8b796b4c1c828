"""Adam optimizer with bias correction, operating in place on numpy arrays."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class Adam:
    """Tracks first/second moments per parameter array.

    Update per step t:
        m = b1 m + (1 - b1) g        v = b2 v + (1 - b2) g^2
        p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    Weight decay, when nonzero, is added to the gradient as decay * p.
    """

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._shapes = [p.shape for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        """Apply one update; params are modified in place."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeError(
                f"expected {len(self.m)} parameter/gradient arrays, "
                f"got {len(params)}/{len(grads)}"
            )
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != self._shapes[i] or g.shape != self._shapes[i]:
                raise ShapeError(
                    f"parameter {i}: shape {p.shape}/{g.shape} does not match "
                    f"state {self._shapes[i]}"
                )
            if self.weight_decay != 0.0:
                g = g + self.weight_decay * p
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            mhat = self.m[i] / c1
            vhat = self.v[i] / c2
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
