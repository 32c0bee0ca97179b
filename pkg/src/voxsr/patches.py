from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .degradation import DegradationSpec, DivisibilityError, degrade
from .volume import Volume


def extract_patch_pairs(hr: Volume, spec: DegradationSpec, hr_patch=(16, 16, 16),
                        stride=None) -> List[Tuple[Volume, Volume]]:
    """Tile ``hr`` with patches and pair each with its degraded version.

    Tiles that would run past the volume edge are dropped. The LR partner is
    ``degrade(hr_patch, spec)``, computed per patch.
    """
    hr_patch = tuple(int(p) for p in hr_patch)
    stride = hr_patch if stride is None else tuple(int(s) for s in stride)
    for name, p, f in zip(("depth", "height", "width"), hr_patch, spec.factors):
        if p % f:
            raise DivisibilityError(f"{name} patch extent {p} is not divisible by factor {f}")
    if min(stride) < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    starts = [range(0, n - p + 1, s) for n, p, s in zip(hr.extents, hr_patch, stride)]
    pairs = []
    for z in starts[0]:
        for y in starts[1]:
            for x in starts[2]:
                block = hr.data[z:z + hr_patch[0], y:y + hr_patch[1], x:x + hr_patch[2]]
                hp = hr.replace(data=np.array(block))
                pairs.append((degrade(hp, spec), hp))
    return pairs
