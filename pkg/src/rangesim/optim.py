"""Adaptive-moment optimizer with decoupled weight decay."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN or Inf; the step was rejected."""


class AdamW:
    """Bias-corrected adaptive moments; weight decay applied to the
    parameters directly rather than through the gradient.

    Update per step t (after incrementing t):
        m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
        theta <- theta*(1 - lr*wd) - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 5e-5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        if lr <= 0:
            raise ValueError(f"AdamW: lr must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError(f"AdamW: betas must lie in [0, 1), got {beta1}, {beta2}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._params = list(params)
        self._m = [np.zeros_like(p.values) for p in self._params]
        self._v = [np.zeros_like(p.values) for p in self._params]

    def zero_grad(self) -> None:
        for p in self._params:
            p.grad = None

    def step(self) -> None:
        """Apply one update using each parameter's .grad (missing = zero).

        The step is atomic: all gradients are validated before any
        parameter is touched, so a non-finite gradient leaves the state
        unchanged.
        """
        grads = []
        for p in self._params:
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            if g.shape != p.values.shape:
                raise ValueError(
                    f"AdamW: gradient shape {g.shape} does not match parameter shape {p.values.shape}"
                )
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError("AdamW: non-finite gradient; step rejected")
            grads.append(g)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self._params, self._m, self._v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay != 0.0:
                p.values *= 1.0 - self.lr * self.weight_decay
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
