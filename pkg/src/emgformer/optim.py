"""Adam with decoupled weight decay.

Update rule per parameter, with t the shared step counter:

    m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta

where m_hat, v_hat carry the usual 1/(1-b^t) bias correction and the decay
term is applied additively, outside the gradient (it never enters m or v).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .tensor import Tensor

__all__ = ["AdamState", "Adam"]


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one parameter set."""

    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-3
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Owns the moment state for a named parameter dict and applies steps."""

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 1e-3):
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                               weight_decay=weight_decay)
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        s = self.state
        s.step += 1
        bc1 = 1.0 - s.beta1 ** s.step
        bc2 = 1.0 - s.beta2 ** s.step
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if np.isnan(g).any():
                raise FloatingPointError(f"NaN gradient for parameter {name!r}")
            m = s.m[name]
            v = s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + s.eps)
            if s.weight_decay:
                update = update + s.weight_decay * p.data
            p.data -= (s.lr * update).astype(p.data.dtype, copy=False)
