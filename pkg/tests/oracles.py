"""Independent reference implementations shared by the unit and acceptance tests.

Each one is written from the defining formula with explicit loops or windows
and shares no code with the library beyond reading network parameters.
"""
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from voxsr.tensor import no_grad


def mirror_index(i, n):
    """Whole-sample mirror: index -1 maps to 1, index n maps to n - 2."""
    while i < 0 or i >= n:
        i = -i if i < 0 else 2 * (n - 1) - i
    return i


def brute_degrade(x, weights, factors):
    """Mirror-padded triple-loop correlation, then keep every factor-th voxel from index 0."""
    D, H, W = x.shape
    kd, kh, kw = weights.shape
    rd, rh, rw = kd // 2, kh // 2, kw // 2
    out = np.zeros((D // factors[0], H // factors[1], W // factors[2]))
    for a in range(out.shape[0]):
        for b in range(out.shape[1]):
            for c in range(out.shape[2]):
                z, y, q = a * factors[0], b * factors[1], c * factors[2]
                acc = 0.0
                for i in range(kd):
                    for j in range(kh):
                        for l in range(kw):
                            acc += weights[i, j, l] * x[mirror_index(z + i - rd, D), mirror_index(y + j - rh, H),
                                                        mirror_index(q + l - rw, W)]
                out[a, b, c] = acc
    return out


def eq2_oracle(net, x, y):
    """Projection logit as an explicit sum over every (channel, i, j, k) of y * F(phi(x)) plus psi."""
    with no_grad():
        feat = net.phi(x).data
    V = net.proj.weight.data[0, :, 0, 0, 0]
    W, b = net.psi.weight.data, net.psi.bias.data
    N, C, d, h, w = feat.shape
    out = np.zeros((N, 1))
    for n in range(N):
        total = 0.0
        for i in range(d):
            for j in range(h):
                for k in range(w):
                    F = 0.0
                    for c in range(C):
                        F += V[c] * feat[n, c, i, j, k]
                    total += y[n, 0, i, j, k] * F
        pooled = feat[n].reshape(C, -1).mean(axis=1)
        out[n, 0] = total + float(W[0] @ pooled) + b[0]
    return out


def projection_map(net, x):
    """F = V * phi(x) on the LR grid."""
    with no_grad():
        return net.proj(net.phi(x)).data


def plain_ce(z, y):
    """Mean softmax cross-entropy with an explicit log-sum-exp."""
    z = np.asarray(z, dtype=np.float64)
    out = 0.0
    for row, label in zip(z, y):
        m = row.max()
        out += -(row[label] - m - math.log(sum(math.exp(v - m) for v in row)))
    return out / len(y)


def direct_ssim(x, y, window=7, sigma=1.5, k1=0.01, k2=0.03, rng_=1.0):
    """SSIM from its definition: a full 3D Gaussian window at every voxel, mirror padding."""
    r = window // 2
    t = np.arange(-r, r + 1)
    d2 = t[:, None, None] ** 2 + t[None, :, None] ** 2 + t[None, None, :] ** 2
    w = np.exp(-d2 / (2 * sigma**2))
    w /= w.sum()
    wx = sliding_window_view(np.pad(x, r, mode="reflect"), (window,) * 3)
    wy = sliding_window_view(np.pad(y, r, mode="reflect"), (window,) * 3)
    axes = (3, 4, 5)
    mx = (wx * w).sum(axes)
    my = (wy * w).sum(axes)
    ex = wx - mx[..., None, None, None]
    ey = wy - my[..., None, None, None]
    vx = (w * ex * ex).sum(axes)
    vy = (w * ey * ey).sum(axes)
    cxy = (w * ex * ey).sum(axes)
    c1, c2 = (k1 * rng_) ** 2, (k2 * rng_) ** 2
    s = (2 * mx * my + c1) * (2 * cxy + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(s.mean())
