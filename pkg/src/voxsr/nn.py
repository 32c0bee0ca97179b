"""Minimal module system: parameter bookkeeping, train/eval mode and layers."""
from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._init: Dict[str, tuple] = {}
        self._buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._modules: "OrderedDict[str, Module]" = OrderedDict()
        self.training = True

    # -- registration ---------------------------------------------------
    def add_param(self, name: str, shape, kind: str, fan_in: int = 1, gain: float = 1.0) -> Tensor:
        if kind == "weight":
            data = np.zeros(shape, dtype=np.float32)
        elif kind in ("bias", "beta"):
            data = np.zeros(shape, dtype=np.float32)
        elif kind == "gamma":
            data = np.ones(shape, dtype=np.float32)
        else:
            raise ValueError(f"unknown parameter kind {kind!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        self._init[name] = (kind, fan_in, gain)
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._buffers[name] = value
        return value

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    # -- traversal --------------------------------------------------------
    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, m in self._modules.items():
            yield from m.named_modules(f"{prefix}{name}.")

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for prefix, m in self.named_modules():
            for name, p in m._params.items():
                yield prefix + name, p

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        for prefix, m in self.named_modules():
            for name, b in m._buffers.items():
                yield prefix + name, b

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    # -- state --------------------------------------------------------------
    def train(self, mode: bool = True) -> "Module":
        for _, m in self.named_modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, m in self.named_modules():
            for name in list(m._buffers):
                m._buffers[name] = m._buffers[name].astype(dtype)
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())
        for n, b in self.named_buffers():
            out[n] = b.copy()
        return out

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for prefix, m in self.named_modules():
            for name, p in m._params.items():
                arr = state[prefix + name]
                if arr.shape != p.shape:
                    raise ValueError(f"{prefix + name}: shape {arr.shape} != {p.shape}")
                p.data = np.array(arr, dtype=p.dtype)
            for name, b in m._buffers.items():
                b[...] = state[prefix + name]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


def param_count(net: Module) -> int:
    return int(sum(p.size for p in net.parameters()))


def init_params(net: Module, seed: int) -> None:
    """Fan-in scaled Gaussian weights, zero biases, unit gamma, zero beta.

    Running statistics are reset too. Parameters are visited in registration
    order with a single seeded stream, so the same seed gives the same net.
    """
    rng = np.random.default_rng(seed)
    for prefix, m in net.named_modules():
        for name, p in m._params.items():
            kind, fan_in, gain = m._init[name]
            if kind == "weight":
                p.data = (rng.standard_normal(p.shape) * (gain / np.sqrt(fan_in))).astype(p.dtype)
            elif kind == "gamma":
                p.data = np.ones(p.shape, dtype=p.dtype)
            else:
                p.data = np.zeros(p.shape, dtype=p.dtype)
        for name, b in m._buffers.items():
            b[...] = 1.0 if name == "running_var" else 0.0


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------
def _triple(v):
    return (v, v, v) if np.isscalar(v) else tuple(v)


class Conv3d(Module):
    def __init__(self, cin, cout, kernel=3, stride=1, padding=None, bias=True, spectral_norm=False,
                 gain=1.0):
        super().__init__()
        self.kernel = _triple(kernel)
        self.stride = _triple(stride)
        self.padding = tuple(k // 2 for k in self.kernel) if padding is None else _triple(padding)
        self.spectral_norm = spectral_norm
        fan_in = cin * int(np.prod(self.kernel))
        self.weight = self.add_param("weight", (cout, cin, *self.kernel), "weight", fan_in, gain)
        self.bias = self.add_param("bias", (cout,), "bias") if bias else None

    def forward(self, x):
        w = ops.spectral_normalize(self.weight) if self.spectral_norm else self.weight
        return ops.conv3d(x, w, self.bias, self.stride, self.padding)


class BatchNorm3d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = self.add_param("gamma", (channels,), "gamma")
        self.beta = self.add_param("beta", (channels,), "beta")
        self.add_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.add_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x):
        return ops.batchnorm3d(x, self.gamma, self.beta, self._buffers["running_mean"],
                               self._buffers["running_var"], self.training, self.momentum, self.eps)


class Activation(Module):
    def __init__(self, kind="leaky_relu", alpha=0.2):
        super().__init__()
        self.kind, self.alpha = kind, alpha

    def forward(self, x):
        return ops.activation(x, self.kind, self.alpha)


class Linear(Module):
    def __init__(self, fin, fout, bias=True, spectral_norm=False, gain=1.0):
        super().__init__()
        self.spectral_norm = spectral_norm
        self.weight = self.add_param("weight", (fout, fin), "weight", fin, gain)
        self.bias = self.add_param("bias", (fout,), "bias") if bias else None

    def forward(self, x):
        w = ops.spectral_normalize(self.weight) if self.spectral_norm else self.weight
        return ops.linear(x, w, self.bias)


class MaxPool3d(Module):
    def forward(self, x):
        return ops.maxpool3d(x)


class Upsample(Module):
    def __init__(self, factors):
        super().__init__()
        self.factors = tuple(factors)

    def forward(self, x):
        return ops.upsample_nearest3d(x, self.factors)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add_module(str(i), layer)

    def forward(self, x):
        for m in self._modules.values():
            x = m(x)
        return x
