"""First-order optimizers for tape-based parameters."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, UsageError
from .tensor import Tensor


class AdamW:
    """Adam with decoupled weight decay.

    Maintains per-parameter first/second moment estimates with bias
    correction. Weight decay is applied directly to the pre-update
    parameter value, not mixed into the gradient.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0:
            raise UsageError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise UsageError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """Apply one update from the accumulated ``.grad`` fields.

        Parameters with ``grad is None`` are skipped. Non-finite gradients
        or resulting parameters abort with NumericalError before any further
        state is corrupted.
        """
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter '{name}'")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            new = p.data - self.lr * update - self.lr * self.weight_decay * p.data
            if not np.all(np.isfinite(new)):
                raise NumericalError(f"non-finite value for parameter '{name}' after update")
            p.data = new
