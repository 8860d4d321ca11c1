"""Adam with bias correction.

One optimizer instance owns one disjoint set of parameters; the training
loop keeps separate instances for the generator and discriminator so a step
on one can never touch the other.
"""

from __future__ import annotations

import numpy as np

from vesselgan.autodiff import Tensor

__all__ = ["Adam"]


class Adam:
    """Bias-corrected Adam over a fixed parameter list.

    Per-parameter first (m) and second (v) moment accumulators plus a shared
    step counter t, incremented exactly once per step(). A parameter whose
    grad is still None is treated as having a zero gradient.
    """

    def __init__(self, params, lr: float = 2e-4, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError(f"Adam: lr must be non-negative, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError(f"Adam: betas must lie in [0, 1), got ({beta1}, {beta2})")
        if eps <= 0:
            raise ValueError(f"Adam: eps must be positive, got {eps}")
        self.params: list[Tensor] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                g = 0.0
            elif g.shape != p.data.shape:
                raise ValueError(
                    f"Adam: grad shape {g.shape} does not match parameter shape {p.data.shape}"
                    + (f" for {p.name!r}" if p.name else "")
                )
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
