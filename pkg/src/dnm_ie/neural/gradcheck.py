"""Central-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor


class GradCheckError(AssertionError):
    pass


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               atol: float = 1e-6, sample: int | None = None,
               rng: np.random.Generator | None = None, points: int = 2) -> float:
    """Max elementwise relative error between analytic and numeric gradients.

    ``fn`` must rebuild the scalar from ``params`` on every call (dropout off).
    Relative error is ``|a - n| / max(|a| + |n|, atol)``; ``atol`` keeps
    entries whose true gradient is ~0 from amplifying rounding noise.
    ``sample`` limits the check to that many random entries per parameter.
    ``points=4`` uses the fourth-order stencil, whose smaller truncation error
    allows a larger ``eps`` and so less round-off on losses of large magnitude.
    """
    if points not in (2, 4):
        raise ValueError("points must be 2 or 4")
    for p in params:
        p.grad = None
    out = fn()
    if out.data.size != 1:
        raise GradCheckError(f"function must return a scalar, got shape {out.shape}")
    out.backward()
    worst = 0.0
    for k, p in enumerate(params):
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        indices = range(flat.size)
        if sample is not None and flat.size > sample:
            indices = (rng or np.random.default_rng(0)).choice(flat.size, sample, replace=False)
        for idx in indices:
            orig = flat[idx]
            values = []
            for step in ((eps, -eps) if points == 2 else (2 * eps, eps, -eps, -2 * eps)):
                flat[idx] = orig + step
                values.append(float(fn().data))
            flat[idx] = orig
            if not all(np.isfinite(values)):
                raise GradCheckError(f"non-finite loss at param {k} index {idx}")
            if points == 2:
                numeric = (values[0] - values[1]) / (2 * eps)
            else:
                numeric = (-values[0] + 8 * values[1] - 8 * values[2] + values[3]) / (12 * eps)
            a = analytic.reshape(-1)[idx]
            if not np.isfinite(a):
                raise GradCheckError(f"non-finite gradient at param {k} index {idx}")
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), atol)
            worst = max(worst, rel)
    return worst
