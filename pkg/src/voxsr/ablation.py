"""Ablation grid: generator x discriminator x perceptual-loss cells plus the interpolation baseline."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

from .degradation import TASK_FACTORS, DegradationSpec
from .losses import LossWeights
from .networks import DiscriminatorConfig, GeneratorConfig
from .results import TASKS, MetricsRow
from .trainer import (BASELINE_NAME, DataConfig, TrainConfig, evaluate, evaluate_interpolation,
                      phantom_pairs, train_gan)

logger = logging.getLogger(__name__)

# (row name, generator kind, discriminator kind or None, perceptual loss)
CELLS: Tuple[Tuple[str, str, Optional[str], bool], ...] = (
    ("SRResNet", "srresnet", None, False),
    ("SRResNet + SD", "srresnet", "sd", False),
    ("SRResNet + PD", "srresnet", "pd", False),
    ("SRResNet + SD + PL", "srresnet", "sd", True),
    ("SRResNet + PD + PL", "srresnet", "pd", True),
    ("RDN + SD", "rdn", "sd", False),
    ("RDN + PD", "rdn", "pd", False),
    ("RDN + SD + PL", "rdn", "sd", True),
    ("RDN + PD + PL", "rdn", "pd", True),
)
CELL_NAMES = tuple(c[0] for c in CELLS)


@dataclass
class AblationConfig:
    """Shared settings for every cell; the cells differ only in architecture and losses."""

    data: DataConfig = field(default_factory=lambda: DataConfig(n_train=4, n_val=1, n_test=2,
                                                                volume_extent=(32, 32, 32),
                                                                hr_patch=(32, 32, 32)))
    generator: dict = field(default_factory=lambda: {"base_channels": 8, "num_blocks": 2,
                                                     "reduce_channels": 8, "rdn_layers_per_block": 2,
                                                     "rdn_growth": 4})
    discriminator: dict = field(default_factory=lambda: {"base_channels": 4})
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    batch_size: int = 1
    steps: int = 40
    seed: int = 0
    noise_sigma: float = 0.01

    def to_dict(self):
        d = asdict(self)
        d["data"] = self.data.to_dict()
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AblationConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ablation keys: {sorted(unknown)}")
        if "data" in d:
            d["data"] = DataConfig.from_dict(d["data"])
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        return cls(**d)


def select_cells(grid: str) -> List[str]:
    """``full`` or a comma-separated list of cell names."""
    if grid == "full":
        return list(CELL_NAMES)
    names = [n.strip() for n in grid.split(",") if n.strip()]
    bad = [n for n in names if n not in CELL_NAMES]
    if bad or not names:
        raise ValueError(f"unknown ablation cells {bad or grid!r}; choose from {list(CELL_NAMES)}")
    return names


def select_tasks(task: str) -> List[str]:
    if task == "both":
        return list(TASKS)
    if task not in TASKS:
        raise ValueError(f"task must be isotropic, anisotropic or both, got {task!r}")
    return [task]


def cell_config(name: str, task: str, ab: AblationConfig) -> TrainConfig:
    _, gkind, dkind, perc = CELLS[CELL_NAMES.index(name)]
    factors = TASK_FACTORS[task]
    gen = GeneratorConfig(**{**ab.generator, "kind": gkind, "scale": factors})
    disc = None
    if dkind is not None:
        disc = DiscriminatorConfig(**{**ab.discriminator, "kind": dkind, "scale": factors,
                                      "input_extent": ab.data.hr_patch})
    return TrainConfig(generator=gen, discriminator=disc, use_perceptual=perc, weights=ab.weights,
                       lr=ab.lr, batch_size=ab.batch_size, steps=ab.steps, seed=ab.seed, task=task,
                       degradation=DegradationSpec.for_factors(factors, ab.noise_sigma, ab.seed))


def build_grid(ab: AblationConfig, cells: Sequence[str], tasks: Sequence[str]) -> List[Tuple[str, TrainConfig]]:
    return [(name, cell_config(name, task, ab)) for task in tasks for name in cells]


def ablation_run(grid: Sequence[Tuple[str, TrainConfig]], data: DataConfig, vgg=None,
                 baseline: bool = True) -> List[MetricsRow]:
    """Train and evaluate every cell; per task the baseline row comes first.

    All cells of one task share the same data. A failing cell becomes an
    ``error`` row and the run goes on.
    """
    tasks: List[str] = []
    for _, cfg in grid:
        if cfg.task not in tasks:
            tasks.append(cfg.task)
    rows: List[MetricsRow] = []
    for task in tasks:
        cells = [(n, c) for n, c in grid if c.task == task]
        spec = cells[0][1].degradation
        if any(c.degradation.to_dict() != spec.to_dict() for _, c in cells):
            raise ValueError(f"cells of task {task} must share one degradation spec")
        train, val, test = (phantom_pairs(data, spec, s) for s in ("train", "val", "test"))
        if baseline:
            rows.append(evaluate_interpolation(test, experiment=BASELINE_NAME))
        for name, cfg in cells:
            try:
                res = train_gan(cfg, train, val, vgg=vgg)
                rows.append(evaluate(res.checkpoint, test, experiment=name))
            except Exception as exc:  # recorded, not fatal
                logger.error("ablation cell %r (%s) failed: %s", name, task, exc)
                rows.append(MetricsRow.error(name, task))
    return rows


