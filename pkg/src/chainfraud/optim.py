"""AdamW with decoupled weight decay, plus the learning-rate schedules.

Bias correction is on by default; ``bias_correction=False`` reproduces the
bare moment-ratio update. With ``weight_decay=0`` the step is exactly Adam.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter
from .errors import NumericError


class AdamW:
    def __init__(
        self,
        params: list[Parameter],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.001,
        bias_correction: bool = True,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in optimizer")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.bias_correction = bias_correction
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        """One update from the currently accumulated gradients."""
        for p in self.params:
            if p.grad is None:
                raise NumericError(f"adamw: parameter {p.name} has no gradient")
        self.t += 1
        for p in self.params:
            g = p.grad
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.bias_correction:
                m_hat = m / (1.0 - self.beta1 ** self.t)
                v_hat = v / (1.0 - self.beta2 ** self.t)
            else:
                m_hat, v_hat = m, v
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data


def linear_warmup_decay(step: int, total_steps: int, warmup_steps: int) -> float:
    """Multiplier ramping 0 -> 1 over the warmup then decaying to 0 at the
    final step index (``total_steps - 1``)."""
    if total_steps <= 1:
        return 1.0
    warmup_steps = max(1, min(warmup_steps, total_steps - 1))
    if step < warmup_steps:
        return step / warmup_steps
    remaining = total_steps - 1 - warmup_steps
    if remaining <= 0:
        return 0.0 if step >= total_steps - 1 else 1.0
    return max(0.0, (total_steps - 1 - step) / remaining)


def constant_schedule(step: int, total_steps: int, warmup_steps: int) -> float:
    return 1.0


SCHEDULES = {
    "linear_warmup_decay": linear_warmup_decay,
    "constant": constant_schedule,
}
