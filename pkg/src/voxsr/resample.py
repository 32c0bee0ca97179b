"""Separable filtering and interpolation matrices shared by several modules.

All routines work on plain numpy arrays whose last three axes are (D, H, W).
"""
import numpy as np
from scipy.ndimage import correlate1d


def correlate1d_mirror(arr, weights, axis):
    """Correlate ``arr`` with a centered odd-length 1D ``weights`` along ``axis``.

    Boundaries are whole-sample mirrored (d c b | a b c d | c b a), which is
    scipy's ``mode="mirror"``. Computation is in float64.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size % 2 != 1:
        raise ValueError(f"filter length must be odd, got {weights.size}")
    return correlate1d(np.asarray(arr, dtype=np.float64), weights, axis=axis, mode="mirror")


def separable_filter3d(arr, axis_weights):
    """Apply three 1D mirror-padded correlations over the last three axes."""
    out = np.asarray(arr, dtype=np.float64)
    nd = out.ndim
    for i, w in enumerate(axis_weights):
        out = correlate1d_mirror(out, w, nd - 3 + i)
    return out


def _keys_cubic(t, a=-0.5):
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def interp_matrix(n, factor, mode="trilinear"):
    """Dense (n*factor, n) matrix resampling an origin-aligned 1D grid.

    Fine sample ``i`` sits at coarse coordinate ``i / factor`` (coarse sample
    ``j`` coincides with fine sample ``j*factor``). Out-of-range taps are
    clamped to the edge, so every row sums to one.
    """
    if factor < 1:
        raise ValueError(f"interpolation factor must be >= 1, got {factor}")
    m = np.zeros((n * factor, n), dtype=np.float64)
    for i in range(n * factor):
        t = i / factor
        j0 = int(np.floor(t))
        frac = t - j0
        if mode == "trilinear":
            taps = [(j0, 1.0 - frac), (j0 + 1, frac)]
        elif mode == "tricubic":
            taps = [(j0 + o, _keys_cubic(frac - o)) for o in (-1, 0, 1, 2)]
        else:
            raise ValueError(f"unknown interpolation mode {mode!r}")
        for j, wgt in taps:
            if wgt != 0.0:
                m[i, min(max(j, 0), n - 1)] += wgt
    return m


def apply_axis_matrices(arr, mats):
    """Contract the last three axes of ``arr`` with (out_len, in_len) matrices."""
    out = arr
    nd = arr.ndim
    for i, m in enumerate(mats):
        if m is None:
            continue
        ax = nd - 3 + i
        out = np.moveaxis(np.tensordot(out, m, axes=([ax], [1])), -1, ax)
    return out
