"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
               max_coords: Optional[int] = None, seed: int = 0) -> float:
    """Largest relative error between autodiff and central differences.

    ``fn(*inputs)`` must return a scalar tensor and be deterministic. Every
    coordinate of every input with ``requires_grad`` is perturbed by +-eps
    unless ``max_coords`` caps the count per input, in which case a seeded
    random subset is used. The error per coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    targets = [t for t in inputs if t.requires_grad]
    for t in targets:
        t.data = np.ascontiguousarray(t.data)
        t.grad = None
    out = fn(*inputs)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
    if out.requires_grad:
        backward(out)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in targets:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a_flat = analytic.reshape(-1)
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                fp = float(fn(*inputs).data.reshape(-1)[0])
                flat[i] = orig - eps
                fm = float(fn(*inputs).data.reshape(-1)[0])
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            a = float(a_flat[i])
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
