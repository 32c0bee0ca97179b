"""Forward degradation model and the interpolation baselines.

A low-resolution observation is produced from a high-resolution volume by
blurring with a normalized separable Gaussian, keeping every s-th voxel per
axis (index 0 kept), and adding seeded Gaussian noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .resample import apply_axis_matrices, interp_matrix, separable_filter3d
from .volume import Volume

TASK_FACTORS = {"isotropic": (2, 2, 2), "anisotropic": (2, 1, 1)}


class DivisibilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BlurKernel:
    sigmas: Tuple[float, float, float]
    support: Tuple[int, int, int]
    axis_weights: Tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        wd, wh, ww = self.axis_weights
        return wd[:, None, None] * wh[None, :, None] * ww[None, None, :]


def gaussian_1d(sigma: float, support: int) -> np.ndarray:
    if support < 1 or support % 2 != 1:
        raise ValueError(f"kernel support must be an odd positive integer, got {support}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    r = support // 2
    if sigma == 0:
        w = np.zeros(support)
        w[r] = 1.0
        return w
    t = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(t**2) / (2 * sigma**2))
    return w / w.sum()


def gaussian_kernel3d(sigmas, support) -> BlurKernel:
    """Sampled separable Gaussian, each axis renormalized to sum 1 (sigma 0 -> delta)."""
    sigmas = tuple(float(s) for s in sigmas)
    support = tuple(int(s) for s in support)
    axis_w = tuple(gaussian_1d(s, n) for s, n in zip(sigmas, support))
    return BlurKernel(sigmas, support, axis_w)


def default_support(sigma: float) -> int:
    return 2 * math.ceil(3 * sigma) + 1


def default_kernel(factors) -> BlurKernel:
    """sigma = 0.5 * factor on downsampled axes, delta elsewhere."""
    sigmas = tuple(0.5 * f if f > 1 else 0.0 for f in factors)
    return gaussian_kernel3d(sigmas, tuple(default_support(s) for s in sigmas))


@dataclass(frozen=True)
class DegradationSpec:
    kernel: BlurKernel
    factors: Tuple[int, int, int] = (2, 2, 2)
    noise_sigma: float = 0.01
    noise_seed: int = 0

    def __post_init__(self):
        factors = tuple(int(f) for f in self.factors)
        if len(factors) != 3 or min(factors) < 1:
            raise ValueError(f"factors must be 3 positive integers, got {self.factors}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def for_factors(cls, factors, noise_sigma=0.01, noise_seed=0) -> "DegradationSpec":
        return cls(default_kernel(factors), tuple(factors), noise_sigma, noise_seed)

    @classmethod
    def for_task(cls, task: str, noise_sigma=0.01, noise_seed=0) -> "DegradationSpec":
        if task not in TASK_FACTORS:
            raise ValueError(f"task must be one of {sorted(TASK_FACTORS)}, got {task!r}")
        return cls.for_factors(TASK_FACTORS[task], noise_sigma, noise_seed)

    def with_seed(self, noise_seed: int) -> "DegradationSpec":
        return DegradationSpec(self.kernel, self.factors, self.noise_sigma, noise_seed)

    @property
    def task(self):
        for name, f in TASK_FACTORS.items():
            if f == self.factors:
                return name
        return None

    def to_dict(self) -> dict:
        return {"sigmas": list(self.kernel.sigmas), "support": list(self.kernel.support),
                "factors": list(self.factors), "noise_sigma": self.noise_sigma,
                "noise_seed": self.noise_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        unknown = set(d) - {"task", "factors", "sigmas", "support", "noise_sigma", "noise_seed"}
        if unknown:
            raise ValueError(f"unknown degradation keys: {sorted(unknown)}")
        factors = tuple(d.get("factors") or TASK_FACTORS[d["task"]])
        if d.get("sigmas") is None:
            kernel = default_kernel(factors)
        else:
            sig = d["sigmas"]
            sup = d.get("support") or [default_support(s) for s in sig]
            kernel = gaussian_kernel3d(sig, sup)
        return cls(kernel, factors, float(d.get("noise_sigma", 0.01)), int(d.get("noise_seed", 0)))


def _check_divisible(extents, factors):
    for name, n, f in zip(("depth", "height", "width"), extents, factors):
        if n % f:
            raise DivisibilityError(f"{name} extent {n} is not divisible by factor {f}")


def blur(v: Volume, kernel: BlurKernel) -> np.ndarray:
    """Mirror-padded separable correlation, returned in float64."""
    return separable_filter3d(v.data, kernel.axis_weights)


def _decimate(arr, factors):
    fd, fh, fw = factors
    return arr[::fd, ::fh, ::fw]


def downsample(v: Volume, factors) -> Volume:
    """Keep voxels whose index along each axis is a multiple of the factor."""
    factors = tuple(int(f) for f in factors)
    _check_divisible(v.extents, factors)
    return v.replace(data=_decimate(v.data, factors),
                     spacing_mm=tuple(s * f for s, f in zip(v.spacing_mm, factors)))


def degrade(x: Volume, spec: DegradationSpec) -> Volume:
    _check_divisible(x.extents, spec.factors)
    y = _decimate(blur(x, spec.kernel), spec.factors)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.noise_seed)
        y = y + spec.noise_sigma * rng.standard_normal(y.shape)
    y = y.astype(np.float32)
    big = np.finfo(np.float32).max
    y = np.nan_to_num(y, nan=0.0, posinf=big, neginf=-big)
    return x.replace(data=y, spacing_mm=tuple(s * f for s, f in zip(x.spacing_mm, spec.factors)))


def interp_upsample(y: Volume, factors, mode: str = "tricubic") -> Volume:
    """Separable trilinear or tricubic (Keys, a=-0.5) upsampling with edge clamping."""
    factors = tuple(int(f) for f in factors)
    mats = [None if f == 1 else interp_matrix(n, f, mode) for n, f in zip(y.extents, factors)]
    out = apply_axis_matrices(y.data.astype(np.float64), mats)
    return y.replace(data=out, spacing_mm=tuple(s / f for s, f in zip(y.spacing_mm, factors)))
