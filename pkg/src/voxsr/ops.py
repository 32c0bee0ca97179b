"""Differentiable operations on :class:`~voxsr.tensor.Tensor`.

Volumetric ops expect (N, C, D, H, W) layout. Each op computes its forward
value with numpy and registers a closure returning one gradient per input.
Gradients for inputs that do not require them are skipped, not computed.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from . import kernels
from .resample import apply_axis_matrices, interp_matrix
from .tensor import ShapeError, Tensor, make_result

_AXES = ("depth", "height", "width")


def _triple(v, what):
    t = (v, v, v) if np.isscalar(v) else tuple(v)
    if len(t) != 3:
        raise ValueError(f"{what} needs 3 components, got {v!r}")
    return tuple(int(a) for a in t)


def _require_rank5(x: Tensor, what: str):
    if x.ndim != 5:
        raise ShapeError(f"{what} expects a rank-5 (N, C, D, H, W) tensor, got shape {x.shape}")


def _same_shape(x: Tensor, y: Tensor, op: str):
    if x.shape != y.shape:
        for i, (a, b) in enumerate(zip(x.shape, y.shape)):
            if a != b:
                raise ShapeError(f"{op}: extent mismatch on axis {i}: {a} vs {b}")
        raise ShapeError(f"{op}: rank mismatch {x.shape} vs {y.shape}")


# ---------------------------------------------------------------------------
# convolution / pooling / resampling
# ---------------------------------------------------------------------------
def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """3D cross-correlation (no kernel flip) with optional per-channel bias."""
    stride = _triple(stride, "stride")
    padding = _triple(padding, "padding")
    _require_rank5(x, "conv3d input")
    if weight.ndim != 5:
        raise ShapeError(f"conv3d kernel must be (Cout, Cin, kd, kh, kw), got {weight.shape}")
    if min(stride) < 1:
        raise ValueError(f"conv3d stride components must be >= 1, got {stride}")
    if min(padding) < 0:
        raise ValueError(f"conv3d padding must be non-negative, got {padding}")
    N, C = x.shape[:2]
    Cout, Cin = weight.shape[:2]
    if Cin != C:
        raise ShapeError(f"conv3d: channel axis mismatch, kernel expects Cin={Cin} but input has C={C}")
    ksize = weight.shape[2:]
    out_ext = []
    for i, name in enumerate(_AXES):
        ext = x.shape[2 + i] + 2 * padding[i]
        if ksize[i] > ext:
            raise ShapeError(
                f"conv3d: {name} axis kernel extent {ksize[i]} exceeds padded input extent {ext}")
        out_ext.append((ext - ksize[i]) // stride[i] + 1)
    if bias is not None and bias.shape != (Cout,):
        raise ShapeError(f"conv3d: bias shape {bias.shape} does not match Cout={Cout}")
    if N == 0 or Cout == 0 or min(out_ext) <= 0:
        raise ShapeError(f"conv3d: zero-size output {(N, Cout, *out_ext)}")

    cols = kernels.im2col3d(x.data, ksize, stride, padding)
    w2 = weight.data.reshape(Cout, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(N, Cout, *out_ext)
    if not weight.requires_grad:
        cols = None  # not needed for the input gradient
    x_shape = x.shape

    def backward(g):
        g2 = g.reshape(N, Cout, -1)
        gx = gw = gb = None
        if x.requires_grad:
            gx = kernels.col2im3d(np.matmul(w2.T, g2), x_shape, ksize, stride, padding)
        if weight.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward, "conv3d")


def maxpool3d(x: Tensor) -> Tensor:
    """2x2x2 max pooling, stride 2, trailing odd voxels dropped."""
    _require_rank5(x, "maxpool3d")
    if min(x.shape[2:]) < 2:
        raise ShapeError(f"maxpool3d needs every spatial extent >= 2, got {x.shape[2:]}")
    out, idx = kernels.maxpool3d_forward(x.data)
    shape = x.shape

    def backward(g):
        return (kernels.maxpool3d_backward(g, idx, shape),)

    return make_result(out, (x,), backward, "maxpool3d")


def upsample_nearest3d(x: Tensor, factors) -> Tensor:
    """Replicate each voxel into an (fd, fh, fw) block."""
    _require_rank5(x, "upsample_nearest3d")
    fd, fh, fw = _triple(factors, "factors")
    if min(fd, fh, fw) < 1:
        raise ValueError(f"upsample factors must be >= 1, got {(fd, fh, fw)}")
    out = x.data.repeat(fd, axis=2).repeat(fh, axis=3).repeat(fw, axis=4)
    N, C, D, H, W = x.shape

    def backward(g):
        return (g.reshape(N, C, D, fd, H, fh, W, fw).sum(axis=(3, 5, 7)),)

    return make_result(out, (x,), backward, "upsample_nearest3d")


def interp_upsample3d(x: Tensor, factors, mode: str = "trilinear") -> Tensor:
    """Separable linear/cubic upsampling on the origin-aligned grid (see ``resample``)."""
    _require_rank5(x, "interp_upsample3d")
    factors = _triple(factors, "factors")
    mats = [None if f == 1 else interp_matrix(n, f, mode) for n, f in zip(x.shape[2:], factors)]
    out = apply_axis_matrices(x.data, mats).astype(x.dtype, copy=False)

    def backward(g):
        mats_t = [None if m is None else m.T for m in mats]
        return (apply_axis_matrices(g, mats_t).astype(g.dtype, copy=False),)

    return make_result(np.ascontiguousarray(out), (x,), backward, f"interp_{mode}")


def global_avg_pool3d(x: Tensor) -> Tensor:
    """(N, C, D, H, W) -> (N, C) spatial mean."""
    _require_rank5(x, "global_avg_pool3d")
    n_vox = int(np.prod(x.shape[2:]))
    out = x.data.mean(axis=(2, 3, 4))
    shape = x.shape

    def backward(g):
        return (np.broadcast_to((g / n_vox)[:, :, None, None, None], shape).copy(),)

    return make_result(out, (x,), backward, "global_avg_pool3d")


# ---------------------------------------------------------------------------
# normalization / dense layers
# ---------------------------------------------------------------------------
def batchnorm3d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                running_var: np.ndarray, training: bool, momentum: float = 0.1,
                eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, D, H, W).

    In training mode the batch statistics are used and ``running_mean`` /
    ``running_var`` are updated in place by an exponential moving average
    (unbiased variance). In eval mode the running statistics are used.
    """
    _require_rank5(x, "batchnorm3d")
    if eps <= 0:
        raise ValueError(f"batchnorm eps must be > 0, got {eps}")
    C = x.shape[1]
    for name, t in (("gamma", gamma.data), ("beta", beta.data), ("running_mean", running_mean),
                    ("running_var", running_var)):
        if t.shape != (C,):
            raise ShapeError(f"batchnorm3d: {name} shape {t.shape} does not match C={C}")
    axes = (0, 2, 3, 4)
    count = x.size // C if C else 0
    dt = x.dtype
    if training:
        if count < 1:
            raise ShapeError("batchnorm3d in training mode needs at least one value per channel")
        # float64 statistics: a constant channel centres to exactly zero
        mean = np.mean(x.data, axis=axes, dtype=np.float64).astype(dt)
        xc = x.data - mean[None, :, None, None, None]
        var = np.mean(np.square(xc, dtype=np.float64), axis=axes).astype(dt)
        unbiased = var * (count / (count - 1)) if count > 1 else var
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mean = running_mean.astype(dt, copy=False)
        var = running_var.astype(dt, copy=False)
        xc = x.data - mean[None, :, None, None, None]
    inv_std = (1.0 / np.sqrt(var + dt.type(eps))).astype(dt)
    xhat = xc * inv_std[None, :, None, None, None]
    out = xhat * gamma.data[None, :, None, None, None] + beta.data[None, :, None, None, None]

    def backward(g):
        gx = gg = gb = None
        if gamma.requires_grad:
            gg = (g * xhat).sum(axis=axes)
        if beta.requires_grad:
            gb = g.sum(axis=axes)
        if x.requires_grad:
            dxhat = g * gamma.data[None, :, None, None, None]
            if training:
                s1 = dxhat.sum(axis=axes)[None, :, None, None, None]
                s2 = (dxhat * xhat).sum(axis=axes)[None, :, None, None, None]
                gx = (dxhat - s1 / count - xhat * (s2 / count)) * inv_std[None, :, None, None, None]
            else:
                gx = dxhat * inv_std[None, :, None, None, None]
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), backward, "batchnorm3d")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ W.T + b``; inputs of rank > 2 are flattened per sample."""
    if x.ndim != 2:
        x = flatten(x)
    F = x.shape[1]
    if weight.ndim != 2 or weight.shape[1] != F:
        raise ShapeError(f"linear: weight shape {weight.shape} does not accept {F} input features")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} does not match Fout={weight.shape[0]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, backward, "linear")


def spectral_normalize(w: Tensor) -> Tensor:
    """Divide a weight by its largest singular value (weight viewed as (rows, -1)).

    The singular value is computed exactly by SVD and differentiated through.
    """
    w2 = w.data.reshape(w.shape[0], -1).astype(np.float64)
    u, s, vt = np.linalg.svd(w2, full_matrices=False)
    sigma = s[0]
    outer = np.outer(u[:, 0], vt[0]).reshape(w.shape)
    out = (w.data / sigma).astype(w.dtype)

    def backward(g):
        g64 = g.astype(np.float64)
        inner = float((g64 * w.data).sum())
        return (((g64 / sigma) - (inner / sigma**2) * outer).astype(g.dtype),)

    return make_result(out, (w,), backward, "spectral_normalize")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------
def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, x.dtype.type(0))

    def backward(g):
        return (g * mask,)

    return make_result(out, (x,), backward, "relu")


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    if not 0 < alpha < 1:
        raise ValueError(f"leaky_relu alpha must lie in (0, 1), got {alpha}")
    mask = x.data > 0
    a = x.dtype.type(alpha)
    out = np.where(mask, x.data, a * x.data)

    def backward(g):
        return (np.where(mask, g, a * g),)

    return make_result(out, (x,), backward, "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)

    def backward(g):
        return (g * s * (1 - s),)

    return make_result(s, (x,), backward, "sigmoid")


def activation(x: Tensor, kind: str, alpha: float = 0.2) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), stable for large |x|."""
    out = np.logaddexp(x.dtype.type(0), x.data)

    def backward(g):
        return (g * expit(x.data),)

    return make_result(out, (x,), backward, "softplus")


def log_softmax(x: Tensor, axis: int = 1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), backward, "log_softmax")


# ---------------------------------------------------------------------------
# elementwise / reductions / structural
# ---------------------------------------------------------------------------
def add(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "add")
    return make_result(x.data + y.data, (x, y), lambda g: (g, g), "add")


def sub(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "sub")
    return make_result(x.data - y.data, (x, y), lambda g: (g, -g), "sub")


def mul(x: Tensor, y: Tensor) -> Tensor:
    _same_shape(x, y, "mul")
    xd, yd = x.data, y.data

    def backward(g):
        return (g * yd if x.requires_grad else None, g * xd if y.requires_grad else None)

    return make_result(xd * yd, (x, y), backward, "mul")


def elementwise(x: Tensor, y: Tensor, op: str) -> Tensor:
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(x, y)


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return make_result(x.data * c, (x,), lambda g: (g * c,), "scale")


def add_scalar(x: Tensor, c: float) -> Tensor:
    return make_result(x.data + x.dtype.type(c), (x,), lambda g: (g,), "add_scalar")


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reduce(x: Tensor, op: str) -> Tensor:
    if op == "sum":
        return sum(x)
    if op == "mean":
        return mean(x)
    raise ValueError(f"unknown reduction {op!r}")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref):
            raise ShapeError(f"concat_channels: rank mismatch {t.shape} vs {ref}")
        for ax in [0] + list(range(2, len(ref))):
            if t.shape[ax] != ref[ax]:
                raise ShapeError(f"concat_channels: axis {ax} extent {t.shape[ax]} != {ref[ax]}")
    out = np.concatenate([t.data for t in tensors], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return make_result(out, tuple(tensors), backward, "concat_channels")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return make_result(xd * xd, (x,), lambda g: (2 * g * xd,), "square")
