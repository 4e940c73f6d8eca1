from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, get_tape, no_grad


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` rebuilds the scalar loss from the current values of ``params``.
    The error per coordinate is |a - c| / max(1, |a|, |c|).
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"step h={h} outside [1e-6, 1e-4]")
    params = list(params)
    get_tape().clear()
    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("objective is not finite")
    backward(loss)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            af = a.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                fp = float(f().data)
                flat[j] = orig - h
                fm = float(f().data)
                flat[j] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise FloatingPointError("objective is not finite")
                c = (fp - fm) / (2.0 * h)
                err = abs(af[j] - c) / max(1.0, abs(af[j]), abs(c))
                worst = max(worst, err)
    for p, g in zip(params, saved):
        p.grad = g
    return worst
