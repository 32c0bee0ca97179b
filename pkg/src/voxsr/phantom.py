"""Synthetic head-like phantoms standing in for acquired MRI volumes.

Each phantom is a large "tissue" ellipsoid whose intensity level depends on
the class (t1 bright, flair mid, diffusion dark; the three level ranges are
disjoint), with smaller inner ellipsoids adding class-specific contrast and
optional band-limited texture. Ellipsoid edges use a raised-cosine taper,
so with zero texture the volume is Lipschitz with a computable constant
(:func:`phantom_gradient_bound`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .volume import CLASS_LABELS, Volume

MIN_EXTENT = 8
EDGE_WIDTH = 0.3  # taper width as a fraction of the normalized radius

# tissue level ranges, pairwise disjoint
_TISSUE_LEVEL = {"t1": (0.74, 0.86), "flair": (0.44, 0.56), "diffusion": (0.16, 0.28)}
# signed contrast ranges of the inner structures
_INNER_CONTRAST = {"t1": (-0.30, -0.15), "flair": (0.15, 0.30), "diffusion": (0.05, 0.12)}


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    class_kind: str = "t1"
    extents: Tuple[int, int, int] = (16, 16, 16)
    ellipsoid_count: int = 4
    texture_amplitude: float = 0.05
    spacing_mm: Tuple[float, float, float] = (2.5, 2.5, 2.5)

    def __post_init__(self):
        if self.class_kind not in CLASS_LABELS:
            raise ValueError(f"class_kind must be one of {CLASS_LABELS}, got {self.class_kind!r}")
        ext = tuple(int(e) for e in self.extents)
        if len(ext) != 3 or min(ext) < MIN_EXTENT:
            raise ValueError(f"phantom extents must be >= {MIN_EXTENT} per axis, got {self.extents}")
        if self.ellipsoid_count < 1:
            raise ValueError("ellipsoid_count must be >= 1")
        if self.texture_amplitude < 0:
            raise ValueError("texture_amplitude must be >= 0")
        object.__setattr__(self, "extents", ext)


@dataclass(frozen=True)
class _Ellipsoid:
    center: np.ndarray
    radii: np.ndarray
    amplitude: float


def _rng(spec: PhantomSpec) -> np.random.Generator:
    return np.random.default_rng([spec.seed, CLASS_LABELS.index(spec.class_kind)])


def _ellipsoids(spec: PhantomSpec, rng) -> List[_Ellipsoid]:
    ext = np.asarray(spec.extents, dtype=np.float64)
    mid = (ext - 1) / 2
    lo, hi = _TISSUE_LEVEL[spec.class_kind]
    out = [_Ellipsoid(mid + rng.uniform(-0.04, 0.04, 3) * ext,
                      rng.uniform(0.40, 0.47, 3) * ext,
                      rng.uniform(lo, hi))]
    clo, chi = _INNER_CONTRAST[spec.class_kind]
    for _ in range(spec.ellipsoid_count - 1):
        out.append(_Ellipsoid(mid + rng.uniform(-0.2, 0.2, 3) * ext,
                              rng.uniform(0.10, 0.20, 3) * ext,
                              rng.uniform(clo, chi)))
    return out


def _profile(q):
    inner = 1.0 - EDGE_WIDTH
    t = np.clip((q - inner) / EDGE_WIDTH, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def phantom_gradient_bound(spec: PhantomSpec) -> float:
    """Per-axis bound on central differences of a texture-free phantom.

    Each tapered ellipsoid is Lipschitz along every axis with constant
    ``pi / (2 * EDGE_WIDTH * min_radius)`` (in voxels); the sum is scaled by
    the amplitudes and clipping to [0, 1] does not increase it. The gradient
    magnitude from ``np.gradient`` is therefore at most ``sqrt(3)`` times this.
    """
    ells = _ellipsoids(spec, _rng(spec))
    return float(sum(abs(e.amplitude) * np.pi / (2 * EDGE_WIDTH * e.radii.min()) for e in ells))


def make_phantom(spec: PhantomSpec) -> Volume:
    rng = _rng(spec)
    ells = _ellipsoids(spec, rng)
    grid = np.stack(np.meshgrid(*[np.arange(n, dtype=np.float64) for n in spec.extents],
                                indexing="ij"))
    vol = np.zeros(spec.extents, dtype=np.float64)
    for e in ells:
        q = np.sqrt((((grid - e.center[:, None, None, None]) / e.radii[:, None, None, None]) ** 2).sum(0))
        vol += e.amplitude * _profile(q)
    if spec.texture_amplitude > 0:
        tex = gaussian_filter(rng.standard_normal(spec.extents), sigma=1.0, mode="mirror")
        tex /= tex.std()
        vol += spec.texture_amplitude * tex
    return Volume(np.clip(vol, 0.0, 1.0), spec.spacing_mm, spec.class_kind)


def phantom_corpus(counts, extents=(32, 32, 32), seed=0, texture_amplitude=0.05,
                   ellipsoid_count=4) -> List[Volume]:
    """Labelled phantoms, ``counts[i]`` of class ``CLASS_LABELS[i]``, seeds disjoint per item."""
    vols = []
    for ci, (kind, n) in enumerate(zip(CLASS_LABELS, counts)):
        for i in range(n):
            vols.append(make_phantom(PhantomSpec(seed * 1_000_003 + ci * 100_000 + i, kind,
                                                 tuple(extents), ellipsoid_count, texture_amplitude)))
    return vols
