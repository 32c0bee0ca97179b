"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and the same accumulation order, so both backends agree to
rounding (usually bitwise).
"""
import numpy as np


def _out_extents(shape, kernel, stride, padding):
    return tuple((shape[i + 2] + 2 * padding[i] - kernel[i]) // stride[i] + 1 for i in range(3))


def im2col3d(x, kernel, stride, padding):
    N, C = x.shape[:2]
    kd, kh, kw = kernel
    sd, sh, sw = stride
    Do, Ho, Wo = _out_extents(x.shape, kernel, stride, padding)
    pd, ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
    cols = np.empty((N, C, kd, kh, kw, Do, Ho, Wo), dtype=x.dtype)
    for a in range(kd):
        for b in range(kh):
            for e in range(kw):
                cols[:, :, a, b, e] = xp[:, :,
                                         a:a + sd * (Do - 1) + 1:sd,
                                         b:b + sh * (Ho - 1) + 1:sh,
                                         e:e + sw * (Wo - 1) + 1:sw]
    return cols.reshape(N, C * kd * kh * kw, Do * Ho * Wo)


def col2im3d(cols, shape, kernel, stride, padding):
    N, C, D, H, W = shape
    kd, kh, kw = kernel
    sd, sh, sw = stride
    pd, ph, pw = padding
    Do, Ho, Wo = _out_extents(shape, kernel, stride, padding)
    cols = cols.reshape(N, C, kd, kh, kw, Do, Ho, Wo)
    out = np.zeros((N, C, D + 2 * pd, H + 2 * ph, W + 2 * pw), dtype=cols.dtype)
    for a in range(kd):
        for b in range(kh):
            for e in range(kw):
                out[:, :,
                    a:a + sd * (Do - 1) + 1:sd,
                    b:b + sh * (Ho - 1) + 1:sh,
                    e:e + sw * (Wo - 1) + 1:sw] += cols[:, :, a, b, e]
    return np.ascontiguousarray(out[:, :, pd:pd + D, ph:ph + H, pw:pw + W])


def maxpool3d_forward(x):
    N, C, D, H, W = x.shape
    Do, Ho, Wo = D // 2, H // 2, W // 2
    v = x[:, :, :2 * Do, :2 * Ho, :2 * Wo].reshape(N, C, Do, 2, Ho, 2, Wo, 2)
    v = v.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(N, C, Do, Ho, Wo, 8)
    # argmax returns the first maximum, matching the compiled tie rule
    idx = np.argmax(v, axis=-1).astype(np.uint8)
    out = np.take_along_axis(v, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool3d_backward(grad, idx, shape):
    N, C, Do, Ho, Wo = grad.shape
    onehot = np.zeros((N, C, Do, Ho, Wo, 8), dtype=grad.dtype)
    np.put_along_axis(onehot, idx[..., None].astype(np.intp), grad[..., None], axis=-1)
    blocks = onehot.reshape(N, C, Do, Ho, Wo, 2, 2, 2).transpose(0, 1, 2, 5, 3, 6, 4, 7)
    out = np.zeros(shape, dtype=grad.dtype)
    out[:, :, :2 * Do, :2 * Ho, :2 * Wo] = blocks.reshape(N, C, 2 * Do, 2 * Ho, 2 * Wo)
    return out
