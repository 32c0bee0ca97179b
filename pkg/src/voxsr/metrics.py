"""PSNR and fully volumetric SSIM."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degradation import gaussian_1d
from .resample import separable_filter3d

PSNR_CAP_DB = 300.0


@dataclass(frozen=True)
class SsimParams:
    window: int = 7
    window_sigma: float = 1.5
    K1: float = 0.01
    K2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 != 1:
            raise ValueError(f"SSIM window must be odd and >= 3, got {self.window}")
        if self.K1 <= 0 or self.K2 <= 0 or self.data_range <= 0:
            raise ValueError("K1, K2 and data_range must be positive")


def _as_array(v):
    return np.asarray(getattr(v, "data", v), dtype=np.float64)


def psnr(a, b, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE); ``inf`` for identical inputs."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"psnr: extent mismatch {x.shape} vs {y.shape}")
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(data_range**2 / mse))


def capped_psnr(value: float) -> float:
    return min(value, PSNR_CAP_DB)


def ssim_map(a, b, p: SsimParams = SsimParams()) -> np.ndarray:
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"ssim3d: extent mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < p.window:
        raise ValueError(f"ssim3d: volume extents {x.shape} smaller than the {p.window}-voxel window")
    g = gaussian_1d(p.window_sigma, p.window)
    filt = lambda v: separable_filter3d(v, (g, g, g))  # noqa: E731
    c1 = (p.K1 * p.data_range) ** 2
    c2 = (p.K2 * p.data_range) ** 2
    mu_x, mu_y = filt(x), filt(y)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    var_x = filt(x * x) - mu_xx
    var_y = filt(y * y) - mu_yy
    cov = filt(x * y) - mu_xy
    num = (2 * mu_xy + c1) * (2 * cov + c2)
    den = (mu_xx + mu_yy + c1) * (var_x + var_y + c2)
    return num / den


def ssim3d(a, b, p: SsimParams = SsimParams()) -> float:
    """Mean of the local SSIM map (3D Gaussian window, mirror boundaries)."""
    return float(np.mean(ssim_map(a, b, p)))
