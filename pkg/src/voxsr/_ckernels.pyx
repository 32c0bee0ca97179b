# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for 3D convolution and pooling.

Every function here has a pure-numpy twin in ``_pykernels`` with the same
signature; ``voxsr.kernels`` picks one at import time.
"""
import numpy as np

ctypedef fused real:
    float
    double


cdef inline object _dtype_of(real dummy):
    if real is float:
        return np.float32
    return np.float64


cdef inline Py_ssize_t _first_valid(Py_ssize_t off, Py_ssize_t step, Py_ssize_t n_out) nogil:
    """Smallest o in [0, n_out] with o * step + off >= 0."""
    if off >= 0:
        return 0
    cdef Py_ssize_t o = (-off + step - 1) // step
    return o if o < n_out else n_out


cdef inline Py_ssize_t _end_valid(Py_ssize_t off, Py_ssize_t step, Py_ssize_t limit, Py_ssize_t n_out) nogil:
    """One past the largest o in [0, n_out) with o * step + off < limit."""
    if off >= limit:
        return 0
    cdef Py_ssize_t o = (limit - 1 - off) // step + 1
    return o if o < n_out else n_out


def im2col3d(const real[:, :, :, :, ::1] x, tuple kernel, tuple stride, tuple padding):
    """Unfold ``x`` (N, C, D, H, W) into columns of shape (N, C*kd*kh*kw, Do*Ho*Wo)."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t D = x.shape[2], H = x.shape[3], W = x.shape[4]
    cdef Py_ssize_t kd = kernel[0], kh = kernel[1], kw = kernel[2]
    cdef Py_ssize_t sd = stride[0], sh = stride[1], sw = stride[2]
    cdef Py_ssize_t pd = padding[0], ph = padding[1], pw = padding[2]
    cdef Py_ssize_t Do = (D + 2 * pd - kd) // sd + 1
    cdef Py_ssize_t Ho = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t Wo = (W + 2 * pw - kw) // sw + 1
    cdef Py_ssize_t L = Do * Ho * Wo
    cdef real zero = 0
    cols_arr = np.empty((N, C * kd * kh * kw, L), dtype=_dtype_of(zero))
    cdef real[:, :, ::1] cols = cols_arr
    cdef Py_ssize_t n, c, a, b, e, od, oh, ow, iz, iy, lo, hi
    cdef real* dst
    cdef const real* src
    if N == 0 or L == 0 or C == 0:
        return cols_arr
    with nogil:
        for n in range(N):
            for c in range(C):
                for a in range(kd):
                    for b in range(kh):
                        for e in range(kw):
                            dst = &cols[n, ((c * kd + a) * kh + b) * kw + e, 0]
                            lo = _first_valid(e - pw, sw, Wo)
                            hi = _end_valid(e - pw, sw, W, Wo)
                            for od in range(Do):
                                iz = od * sd - pd + a
                                for oh in range(Ho):
                                    iy = oh * sh - ph + b
                                    if iz < 0 or iz >= D or iy < 0 or iy >= H or hi <= lo:
                                        for ow in range(Wo):
                                            dst[ow] = zero
                                    else:
                                        for ow in range(lo):
                                            dst[ow] = zero
                                        src = &x[n, c, iz, iy, 0]
                                        if sw == 1:
                                            src = src + (e - pw)
                                            for ow in range(lo, hi):
                                                dst[ow] = src[ow]
                                        else:
                                            for ow in range(lo, hi):
                                                dst[ow] = src[ow * sw - pw + e]
                                        for ow in range(hi, Wo):
                                            dst[ow] = zero
                                    dst = dst + Wo
    return cols_arr


def col2im3d(const real[:, :, ::1] cols, tuple shape, tuple kernel, tuple stride, tuple padding):
    """Adjoint of ``im2col3d``: scatter-add columns back onto a (N, C, D, H, W) grid."""
    cdef Py_ssize_t N = shape[0], C = shape[1], D = shape[2], H = shape[3], W = shape[4]
    cdef Py_ssize_t kd = kernel[0], kh = kernel[1], kw = kernel[2]
    cdef Py_ssize_t sd = stride[0], sh = stride[1], sw = stride[2]
    cdef Py_ssize_t pd = padding[0], ph = padding[1], pw = padding[2]
    cdef Py_ssize_t Do = (D + 2 * pd - kd) // sd + 1
    cdef Py_ssize_t Ho = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t Wo = (W + 2 * pw - kw) // sw + 1
    cdef real zero = 0
    out_arr = np.zeros((N, C, D, H, W), dtype=_dtype_of(zero))
    cdef real[:, :, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, c, a, b, e, od, oh, ow, iz, iy, lo, hi
    cdef const real* src
    cdef real* dst
    if N == 0 or C == 0 or Do * Ho * Wo == 0:
        return out_arr
    with nogil:
        for n in range(N):
            for c in range(C):
                for a in range(kd):
                    for b in range(kh):
                        for e in range(kw):
                            lo = _first_valid(e - pw, sw, Wo)
                            hi = _end_valid(e - pw, sw, W, Wo)
                            if hi <= lo:
                                continue
                            src = &cols[n, ((c * kd + a) * kh + b) * kw + e, 0]
                            for od in range(Do):
                                iz = od * sd - pd + a
                                if iz < 0 or iz >= D:
                                    src = src + Ho * Wo
                                    continue
                                for oh in range(Ho):
                                    iy = oh * sh - ph + b
                                    if 0 <= iy < H:
                                        dst = &out[n, c, iz, iy, 0]
                                        if sw == 1:
                                            dst = dst + (e - pw)
                                            for ow in range(lo, hi):
                                                dst[ow] += src[ow]
                                        else:
                                            for ow in range(lo, hi):
                                                dst[ow * sw - pw + e] += src[ow]
                                    src = src + Wo
    return out_arr


def maxpool3d_forward(const real[:, :, :, :, ::1] x):
    """2x2x2 max pooling with stride 2 (floor mode).

    Returns the pooled array and the winning offset (0..7) per output voxel;
    ties go to the first offset in (d, h, w) raster order.
    """
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t Do = x.shape[2] // 2, Ho = x.shape[3] // 2, Wo = x.shape[4] // 2
    cdef real zero = 0
    out_arr = np.empty((N, C, Do, Ho, Wo), dtype=_dtype_of(zero))
    idx_arr = np.empty((N, C, Do, Ho, Wo), dtype=np.uint8)
    cdef real[:, :, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t n, c, od, oh, ow, k
    cdef unsigned char best_k
    cdef real best, v
    with nogil:
        for n in range(N):
            for c in range(C):
                for od in range(Do):
                    for oh in range(Ho):
                        for ow in range(Wo):
                            best = x[n, c, 2 * od, 2 * oh, 2 * ow]
                            best_k = 0
                            for k in range(1, 8):
                                v = x[n, c, 2 * od + (k >> 2), 2 * oh + ((k >> 1) & 1), 2 * ow + (k & 1)]
                                if v > best:
                                    best = v
                                    best_k = <unsigned char>k
                            out[n, c, od, oh, ow] = best
                            idx[n, c, od, oh, ow] = best_k
    return out_arr, idx_arr


def maxpool3d_backward(const real[:, :, :, :, ::1] grad, const unsigned char[:, :, :, :, ::1] idx, tuple shape):
    cdef Py_ssize_t N = grad.shape[0], C = grad.shape[1]
    cdef Py_ssize_t Do = grad.shape[2], Ho = grad.shape[3], Wo = grad.shape[4]
    cdef real zero = 0
    out_arr = np.zeros(shape, dtype=_dtype_of(zero))
    cdef real[:, :, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, c, od, oh, ow
    cdef unsigned char k
    with nogil:
        for n in range(N):
            for c in range(C):
                for od in range(Do):
                    for oh in range(Ho):
                        for ow in range(Wo):
                            k = idx[n, c, od, oh, ow]
                            out[n, c, 2 * od + (k >> 2), 2 * oh + ((k >> 1) & 1), 2 * ow + (k & 1)] = grad[n, c, od, oh, ow]
    return out_arr
