"""AdamW with decoupled weight decay and the multi-step LR schedule."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

LR_DROP_EPOCHS = (100, 1000, 2500)


def lr_for_epoch(
    epoch: int,
    base_lr: float = 1e-3,
    drop_epochs=LR_DROP_EPOCHS,
    factor: float = 0.1,
) -> float:
    """Learning rate for a 0-based epoch index.

    The rate is divided by 10 after each boundary: epochs 0..99 run at the
    base rate, 100..999 at base/10, and so on.
    """
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    drops = bisect.bisect_right(sorted(drop_epochs), epoch)
    return base_lr * factor**drops


def adamw_update(theta, grad, m, v, step: int, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
    """One decoupled-weight-decay Adam step; returns (theta', m', v').

    theta' = theta - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * theta )
    with bias-corrected moments at the given 1-based step count.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    beta1, beta2 = betas
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    theta = theta - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * theta)
    return theta, m, v


@dataclass
class AdamW:
    """Optimizer over named tensors; moments are keyed by tensor name.

    Frozen tensors are simply not passed to ``step``, which keeps them
    bit-identical (no decay) and leaves their moments untouched; their
    per-tensor step counts resume when they thaw.
    """

    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    _m: dict = field(default_factory=dict, repr=False)
    _v: dict = field(default_factory=dict, repr=False)
    _steps: dict = field(default_factory=dict, repr=False)

    def step(self, named_tensors) -> None:
        """Apply one update to every (name, tensor) with a gradient."""
        for name, tensor in named_tensors:
            if tensor.grad is None:
                continue
            if name not in self._m:
                self._m[name] = np.zeros(tensor.shape)
                self._v[name] = np.zeros(tensor.shape)
                self._steps[name] = 0
            self._steps[name] += 1
            theta, m, v = adamw_update(
                tensor.value,
                tensor.grad,
                self._m[name],
                self._v[name],
                self._steps[name],
                self.lr,
                self.betas,
                self.eps,
                self.weight_decay,
            )
            tensor.value = theta
            self._m[name] = m
            self._v[name] = v
