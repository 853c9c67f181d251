"""Adam with parameter groups."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float | dict[str, float] | None = None) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update; returns new arrays and advances ``state``.

    ``lr`` may be a per-parameter mapping (parameter groups).
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        rate = state.lr if lr is None else (lr[name] if isinstance(lr, dict) else lr)
        out[name] = p - rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


class Adam:
    """In-place Adam over named tensors; ``groups`` maps parameter name -> base lr."""

    def __init__(self, params: dict[str, Tensor], lrs: dict[str, float] | float = 1e-3,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.base_lr = lrs if isinstance(lrs, dict) else {k: lrs for k in params}
        self.state = AdamState(lr=0.0, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, scale: float = 1.0):
        lrs = {k: lr * scale for k, lr in self.base_lr.items()}
        arrays = {k: p.data for k, p in self.params.items()}
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        new = adam_step(arrays, grads, self.state, lrs)
        for k, p in self.params.items():
            p.data = new[k]

    def hyperparameters(self) -> dict:
        s = self.state
        return {"beta1": s.beta1, "beta2": s.beta2, "eps": s.eps}


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm
