"""AdamW with decoupled weight decay, plus the step-decay learning schedule."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError

__all__ = ["AdamW", "step_decay_lr"]


def step_decay_lr(base_lr: float, epoch: int, factor: float = 0.8,
                  period: int = 3) -> float:
    """Learning rate after multiplying by ``factor`` every ``period`` epochs."""
    return base_lr * factor ** (epoch // period)


class AdamW:
    """Adam moments on the gradient; weight decay applied directly to weights.

    The update for each parameter p with gradient g is

        m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
        p <- p - lr*wd*p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)

    so decay is decoupled from the adaptive step.  A non-finite gradient
    aborts the step with NonFiniteError before any parameter is touched.
    """

    def __init__(self, named_params, lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(named_params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {name: np.zeros_like(p.data, dtype=np.float32)
                   for name, p in self.params}
        self._v = {name: np.zeros_like(p.data, dtype=np.float32)
                   for name, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        if lr is None:
            lr = self.lr
        for name, p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NonFiniteError(f"non-finite gradient for '{name}'")
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self._m[name]
            v = self._v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - lr * self.weight_decay * p.data - lr * update.astype(p.data.dtype)

    def state_dict(self) -> dict:
        out = {"t": self.t}
        for name, _ in self.params:
            out[f"m.{name}"] = self._m[name]
            out[f"v.{name}"] = self._v[name]
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for name, _ in self.params:
            self._m[name] = np.asarray(state[f"m.{name}"], dtype=np.float32)
            self._v[name] = np.asarray(state[f"v.{name}"], dtype=np.float32)
