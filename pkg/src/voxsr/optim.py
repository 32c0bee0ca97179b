"""Adam with bias correction."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, hyper: AdamHyper) -> bool:
    """Update ``params`` and ``state`` in place; return False if skipped.

    A step whose gradients contain NaN/Inf is skipped as a whole: neither
    parameters nor moments nor the step counter change.
    """
    for k, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            logger.warning("non-finite gradient in %s; Adam step %d skipped", k, state.step + 1)
            return False
    t = state.step + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= hyper.beta1
        m += (1 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1 - hyper.beta2) * (g * g)
        p -= hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    state.step = t
    return True


class Adam:
    """Adam over a module's named parameters."""

    def __init__(self, named_params, hyper: AdamHyper = AdamHyper()):
        self.params = dict(named_params)
        self.hyper = hyper
        self.state = AdamState.zeros_like({k: p.data for k, p in self.params.items()})
        self.skipped = 0

    def step(self) -> bool:
        ok = adam_step({k: p.data for k, p in self.params.items()},
                       {k: p.grad for k, p in self.params.items()}, self.state, self.hyper)
        if not ok:
            self.skipped += 1
        return ok

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_tensors(self, prefix: str) -> Dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"{prefix}.m.{k}"] = self.state.m[k]
            out[f"{prefix}.v.{k}"] = self.state.v[k]
        return out

    def load_state_tensors(self, prefix: str, tensors: Mapping[str, np.ndarray], step: int) -> None:
        for k in self.params:
            self.state.m[k][...] = tensors[f"{prefix}.m.{k}"]
            self.state.v[k][...] = tensors[f"{prefix}.v.{k}"]
        self.state.step = step
