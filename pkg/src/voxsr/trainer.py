"""VGG pretraining, the alternating GAN loop, checkpoints and evaluation."""
from __future__ import annotations

import logging
import math
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import Checkpoint
from .degradation import TASK_FACTORS, DegradationSpec, interp_upsample
from .losses import (CBLossParams, LossWeights, adv_loss_d, class_balanced_ce,
                     class_balanced_weights, generator_objective)
from .metrics import SsimParams, capped_psnr, psnr, ssim3d
from .networks import (DiscriminatorConfig, Generator, GeneratorConfig, VggConfig, build_discriminator,
                       build_generator, build_vgg3d, freeze)
from .optim import Adam, AdamHyper
from .patches import extract_patch_pairs
from .phantom import PhantomSpec, make_phantom, phantom_corpus
from .results import MetricsRow
from .tensor import ShapeError, Tensor, backward, no_grad
from .volume import CLASS_LABELS, Volume

logger = logging.getLogger(__name__)

# phantom seed offsets keeping train / val / test volumes disjoint
SPLIT_OFFSETS = {"train": 0, "val": 1_000_000, "test": 2_000_000}
BASELINE_NAME = "Bicubic"


# ---------------------------------------------------------------------------
# paired data
# ---------------------------------------------------------------------------
@dataclass
class PairSet:
    """Stacked LR/HR pairs, arrays shaped (N, 1, d, h, w) / (N, 1, D, H, W)."""

    lr: np.ndarray
    hr: np.ndarray
    factors: Tuple[int, int, int]

    def __post_init__(self):
        self.factors = tuple(int(f) for f in self.factors)
        if self.lr.ndim != 5 or self.hr.ndim != 5 or len(self.lr) != len(self.hr):
            raise ShapeError(f"pair arrays must be (N,1,...) with equal N, got {self.lr.shape} / {self.hr.shape}")
        want = tuple(n * f for n, f in zip(self.lr.shape[2:], self.factors))
        if self.hr.shape[2:] != want:
            raise ShapeError(f"HR extents {self.hr.shape[2:]} != LR extents {self.lr.shape[2:]} "
                             f"x factors {self.factors}")

    def __len__(self):
        return len(self.lr)

    @property
    def task(self) -> Optional[str]:
        for name, f in TASK_FACTORS.items():
            if f == self.factors:
                return name
        return None

    @classmethod
    def from_volumes(cls, pairs: Sequence[Tuple[Volume, Volume]], factors=None) -> "PairSet":
        if not pairs:
            raise ValueError("no pairs given")
        if factors is None:
            lr0, hr0 = pairs[0]
            factors = tuple(h // l for h, l in zip(hr0.extents, lr0.extents))
        lr = np.stack([p[0].data for p in pairs])[:, None]
        hr = np.stack([p[1].data for p in pairs])[:, None]
        return cls(np.ascontiguousarray(lr), np.ascontiguousarray(hr), factors)

    def volumes(self, i: int) -> Tuple[Volume, Volume]:
        return Volume(self.lr[i, 0]), Volume(self.hr[i, 0])


@dataclass
class DataConfig:
    """Phantom-derived pairs: whole volumes tiled into HR patches."""

    n_train: int = 8
    n_val: int = 2
    n_test: int = 4
    volume_extent: Tuple[int, int, int] = (32, 32, 32)
    hr_patch: Tuple[int, int, int] = (16, 16, 16)
    seed: int = 0
    texture_amplitude: float = 0.05

    def __post_init__(self):
        self.volume_extent = tuple(int(e) for e in self.volume_extent)
        self.hr_patch = tuple(int(e) for e in self.hr_patch)
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("every split needs at least one volume")
        if any(p > e for p, e in zip(self.hr_patch, self.volume_extent)):
            raise ValueError(f"patch {self.hr_patch} larger than volume {self.volume_extent}")

    def to_dict(self):
        d = asdict(self)
        d["volume_extent"] = list(self.volume_extent)
        d["hr_patch"] = list(self.hr_patch)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        return cls(**d)


def phantom_pairs(data: DataConfig, spec: DegradationSpec, split: str) -> PairSet:
    """Deterministic pairs for one split; classes cycle t1, flair, diffusion."""
    n = {"train": data.n_train, "val": data.n_val, "test": data.n_test}[split]
    pairs = []
    for i in range(n):
        seed = data.seed * 10_000_019 + SPLIT_OFFSETS[split] + i
        vol = make_phantom(PhantomSpec(seed, CLASS_LABELS[i % 3], data.volume_extent,
                                       texture_amplitude=data.texture_amplitude))
        pairs += extract_patch_pairs(vol, spec.with_seed(spec.noise_seed * 7919 + seed), data.hr_patch)
    return PairSet.from_volumes(pairs, spec.factors)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass
class TrainConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: Optional[DiscriminatorConfig] = None
    use_perceptual: bool = False
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 4
    steps: int = 500
    seed: int = 0
    task: str = "isotropic"
    degradation: Optional[DegradationSpec] = None
    cb_beta: float = 0.999
    checkpoint_every: int = 0
    val_every: int = 0

    def __post_init__(self):
        if self.task not in TASK_FACTORS:
            raise ValueError(f"task must be one of {sorted(TASK_FACTORS)}, got {self.task!r}")
        factors = TASK_FACTORS[self.task]
        if self.degradation is None:
            self.degradation = DegradationSpec.for_task(self.task)
        if self.degradation.factors != factors:
            raise ValueError(f"task {self.task} fixes factors {factors}, degradation has "
                             f"{self.degradation.factors}")
        if self.generator.scale != factors:
            raise ValueError(f"generator scale {self.generator.scale} does not match task factors {factors}")
        if self.discriminator is not None and self.discriminator.scale != factors:
            raise ValueError(f"discriminator scale {self.discriminator.scale} does not match "
                             f"task factors {factors}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.checkpoint_every < 0 or self.val_every < 0:
            raise ValueError("checkpoint_every and val_every must be >= 0")

    @property
    def factors(self) -> Tuple[int, int, int]:
        return TASK_FACTORS[self.task]

    @property
    def hyper(self) -> AdamHyper:
        return AdamHyper(self.lr, self.adam_beta1, self.adam_beta2, self.adam_eps)

    def effective_weights(self) -> LossWeights:
        """Adversarial weight forced to 0 without a discriminator, perceptual without PL."""
        w = self.weights
        return LossWeights(w.lambda_pix, w.lambda_adv if self.discriminator else 0.0,
                           w.lambda_perc if self.use_perceptual else 0.0, w.tap_weights)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "discriminator": None if self.discriminator is None else self.discriminator.to_dict(),
            "use_perceptual": self.use_perceptual,
            "weights": self.weights.to_dict(),
            "lr": self.lr, "adam_beta1": self.adam_beta1, "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps, "batch_size": self.batch_size, "steps": self.steps,
            "seed": self.seed, "task": self.task, "degradation": self.degradation.to_dict(),
            "cb_beta": self.cb_beta, "checkpoint_every": self.checkpoint_every,
            "val_every": self.val_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        task = d.get("task", "isotropic")
        if task not in TASK_FACTORS:
            raise ValueError(f"task must be one of {sorted(TASK_FACTORS)}, got {task!r}")
        factors = list(TASK_FACTORS[task])
        g = dict(d.get("generator") or {})
        g.setdefault("scale", factors)
        d["generator"] = GeneratorConfig(**g)
        if d.get("discriminator") is not None:
            dc = dict(d["discriminator"])
            dc.setdefault("scale", factors)
            d["discriminator"] = DiscriminatorConfig(**dc)
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        if d.get("degradation") is not None:
            deg = dict(d["degradation"])
            deg.setdefault("factors", factors)
            d["degradation"] = DegradationSpec.from_dict(deg)
        return cls(**d)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def batch_indices(n: int, batch: int, seed: int, step: int) -> np.ndarray:
    """Indices for one step; a pure function of (seed, step) so resumes replay exactly."""
    rng = np.random.default_rng([seed, step])
    if batch <= n:
        return np.sort(rng.permutation(n)[:batch])
    return rng.integers(0, n, size=batch)


def stratified_indices(labels: np.ndarray, batch: int, seed: int, step: int) -> np.ndarray:
    """One index per class first, remaining slots uniform over the whole set.

    Keeps every class in every batch so BatchNorm statistics never collapse onto
    the majority class; the class-balanced weights still act on the loss.
    """
    rng = np.random.default_rng([seed, step])
    groups = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    if batch < len(groups):
        groups = [groups[i] for i in np.sort(rng.permutation(len(groups))[:batch])]
    first = [int(rng.choice(g)) for g in groups]
    rest = rng.integers(0, len(labels), size=batch - len(first))
    return np.concatenate([np.asarray(first, dtype=np.int64), rest])


def disc_logits(D, x: Tensor, lr: Tensor) -> Tensor:
    """SD judges the candidate alone; PD judges (candidate, LR condition)."""
    return D(x, lr) if D.conditional else D(x)


def _prefixed(prefix: str, d) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((prefix + k, v) for k, v in d.items())


def _val_metrics(G: Generator, pairs: PairSet, params: SsimParams) -> Dict[str, float]:
    was_training = G.training
    G.eval()
    mse, ps, ss = [], [], []
    with no_grad():
        for i in range(len(pairs)):
            sr = G(Tensor(pairs.lr[i:i + 1])).data[0, 0]
            hr = pairs.hr[i, 0]
            mse.append(float(np.mean((sr.astype(np.float64) - hr) ** 2)))
            ps.append(capped_psnr(psnr(sr, hr)))
            ss.append(ssim3d(sr, hr, params))
    G.train(was_training)
    return {"mse": float(np.mean(mse)), "psnr": float(np.mean(ps)), "ssim": float(np.mean(ss))}


# ---------------------------------------------------------------------------
# GAN training
# ---------------------------------------------------------------------------
@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: List[dict]


def _gan_checkpoint(cfg, step, G, D, opt_g, opt_d) -> Checkpoint:
    tensors = _prefixed("g.", G.state_dict())
    if D is not None:
        tensors.update(_prefixed("d.", D.state_dict()))
    tensors.update(opt_g.state_tensors("opt_g"))
    meta = {"opt_g_step": opt_g.state.step, "skipped_g": opt_g.skipped}
    if opt_d is not None:
        tensors.update(opt_d.state_tensors("opt_d"))
        meta.update(opt_d_step=opt_d.state.step, skipped_d=opt_d.skipped)
    return Checkpoint("gan", cfg.to_dict(), tensors, step, meta)


_RESUME_FREE_KEYS = ("steps", "checkpoint_every", "val_every")


def train_gan(cfg: TrainConfig, train: PairSet, val: Optional[PairSet] = None, vgg=None,
              resume: Optional[Checkpoint] = None,
              on_checkpoint: Optional[Callable[[Checkpoint], None]] = None,
              ssim_params: SsimParams = SsimParams()) -> TrainResult:
    """Alternating D/G training (or plain pixel/perceptual training without D).

    Each step draws a batch, runs G once, updates D on (HR, SR.detach()) and
    then G on the weighted objective with D frozen. Everything is seeded, so
    the same inputs give bitwise-identical checkpoints, and resuming from a
    checkpoint replays the remaining steps exactly.
    """
    for name, ps in (("train", train), ("val", val)):
        if ps is not None and ps.factors != cfg.factors:
            raise ValueError(f"{name} pairs have factors {ps.factors} but task {cfg.task} "
                             f"needs {cfg.factors}")
    weights = cfg.effective_weights()
    if weights.lambda_perc > 0:
        if vgg is None:
            raise ValueError("use_perceptual needs a pretrained VGG")
        freeze(vgg)
    else:
        vgg = None

    G = build_generator(cfg.generator, seed=cfg.seed)
    D = None if cfg.discriminator is None else build_discriminator(cfg.discriminator, seed=cfg.seed + 1)
    opt_g = Adam(G.named_parameters(), cfg.hyper)
    opt_d = None if D is None else Adam(D.named_parameters(), cfg.hyper)
    start = 0
    if resume is not None:
        mine = {k: v for k, v in cfg.to_dict().items() if k not in _RESUME_FREE_KEYS}
        theirs = {k: v for k, v in resume.config.items() if k not in _RESUME_FREE_KEYS}
        if mine != theirs:
            raise ValueError("resume checkpoint was written by a different configuration")
        if resume.step > cfg.steps:
            raise ValueError(f"checkpoint step {resume.step} exceeds configured steps {cfg.steps}")
        G.load_state_dict(resume.subset("g."))
        opt_g.load_state_tensors("opt_g", resume.tensors, resume.meta["opt_g_step"])
        opt_g.skipped = resume.meta.get("skipped_g", 0)
        if D is not None:
            D.load_state_dict(resume.subset("d."))
            opt_d.load_state_tensors("opt_d", resume.tensors, resume.meta["opt_d_step"])
            opt_d.skipped = resume.meta.get("skipped_d", 0)
        start = resume.step

    G.train()
    log: List[dict] = []
    for step in range(start + 1, cfg.steps + 1):
        t0 = time.perf_counter()
        idx = batch_indices(len(train), cfg.batch_size, cfg.seed, step)
        lr_b, hr_b = Tensor(train.lr[idx]), Tensor(train.hr[idx])
        sr = G(lr_b)
        losses: Dict[str, float] = {}
        skipped = []
        fake_for_g = None
        if D is not None:
            D.requires_grad_(True)
            loss_d = adv_loss_d(disc_logits(D, hr_b, lr_b), disc_logits(D, sr.detach(), lr_b))
            backward(loss_d)
            if not opt_d.step():
                skipped.append("d")
            opt_d.zero_grad()
            losses["d"] = float(loss_d.data)
            D.requires_grad_(False)
            if weights.lambda_adv > 0:
                fake_for_g = disc_logits(D, sr, lr_b)
        total, terms = generator_objective(sr, hr_b, fake_for_g, vgg, weights)
        backward(total)
        if not opt_g.step():
            skipped.append("g")
        opt_g.zero_grad()
        losses.update({f"g_{k}": v for k, v in terms.items()})
        rec = {"step": step, "loss": losses, "lr": cfg.lr,
               "wall_ms": round(1000 * (time.perf_counter() - t0), 3)}
        if skipped:
            rec["skipped"] = skipped
        if val is not None and cfg.val_every and (step % cfg.val_every == 0 or step == cfg.steps):
            rec["val"] = _val_metrics(G, val, ssim_params)
        log.append(rec)
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and on_checkpoint is not None:
            on_checkpoint(_gan_checkpoint(cfg, step, G, D, opt_g, opt_d))
    if D is not None:
        D.requires_grad_(True)
    return TrainResult(_gan_checkpoint(cfg, cfg.steps, G, D, opt_g, opt_d), log)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------
def load_generator(ck: Checkpoint) -> Generator:
    if ck.kind != "gan":
        raise ValueError(f"expected a generator checkpoint, got kind {ck.kind!r}")
    cfg = TrainConfig.from_dict(ck.config)
    G = build_generator(cfg.generator, seed=None)
    G.load_state_dict(ck.subset("g."))
    return G.eval()


def super_resolve(G: Generator, lr: Volume) -> Volume:
    if min(lr.extents) < 1:
        raise ShapeError("empty volume")
    with no_grad():
        out = G.eval()(Tensor(lr.data[None, None])).data[0, 0]
    scale = G.cfg.scale
    return Volume(out, tuple(s / f for s, f in zip(lr.spacing_mm, scale)), lr.label)


def evaluate_predictor(predict: Callable[[np.ndarray], np.ndarray], pairs: PairSet, experiment: str,
                       params: SsimParams = SsimParams()) -> MetricsRow:
    """Mean SSIM and mean (capped) PSNR of ``predict(lr)`` against HR over all pairs."""
    task = pairs.task
    if task is None:
        raise ValueError(f"pair factors {pairs.factors} match no task")
    ss, ps = [], []
    for i in range(len(pairs)):
        sr = np.asarray(predict(pairs.lr[i, 0]))
        hr = pairs.hr[i, 0]
        if sr.shape != hr.shape:
            raise ShapeError(f"prediction extents {sr.shape} != HR extents {hr.shape}")
        ss.append(ssim3d(sr, hr, params))
        ps.append(capped_psnr(psnr(sr, hr)))
    return MetricsRow(experiment, task, float(np.mean(ss)), float(np.mean(ps)), len(pairs))


def evaluate(ck: Checkpoint, pairs: PairSet, params: SsimParams = SsimParams(),
             experiment: Optional[str] = None) -> MetricsRow:
    G = load_generator(ck)
    if tuple(G.cfg.scale) != pairs.factors:
        raise ShapeError(f"checkpoint scale {G.cfg.scale} does not match pair factors {pairs.factors}")

    def predict(lr):
        with no_grad():
            return G(Tensor(lr[None, None])).data[0, 0]

    return evaluate_predictor(predict, pairs, experiment or ck.meta.get("name", "model"), params)


def evaluate_interpolation(pairs: PairSet, mode: str = "tricubic", params: SsimParams = SsimParams(),
                           experiment: str = BASELINE_NAME) -> MetricsRow:
    """Interpolation baseline through the same metric path."""
    return evaluate_predictor(lambda lr: interp_upsample(Volume(lr), pairs.factors, mode).data,
                              pairs, experiment, params)


# ---------------------------------------------------------------------------
# VGG pretraining
# ---------------------------------------------------------------------------
@dataclass
class CorpusConfig:
    counts: Tuple[int, int, int] = (23, 23, 250)
    extents: Tuple[int, int, int] = (32, 32, 32)
    seed: int = 0
    texture_amplitude: float = 0.05
    eval_per_class: int = 10

    def __post_init__(self):
        self.counts = tuple(int(c) for c in self.counts)
        self.extents = tuple(int(e) for e in self.extents)

    def to_dict(self):
        d = asdict(self)
        d["counts"] = list(self.counts)
        d["extents"] = list(self.extents)
        return d

    def train_volumes(self) -> List[Volume]:
        return phantom_corpus(self.counts, self.extents, seed=2 * self.seed,
                              texture_amplitude=self.texture_amplitude)

    def eval_volumes(self) -> List[Volume]:
        return phantom_corpus((self.eval_per_class,) * 3, self.extents, seed=2 * self.seed + 1,
                              texture_amplitude=self.texture_amplitude)


@dataclass
class VggTrainConfig:
    vgg: VggConfig = field(default_factory=VggConfig)
    cb_beta: float = 0.999
    lr: float = 1e-3
    batch_size: int = 4
    steps: int = 300
    seed: int = 0
    eval_every: int = 0  # 0: once per epoch over the corpus
    lr_schedule: str = "cosine"  # or "constant"

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"lr_schedule must be 'cosine' or 'constant', got {self.lr_schedule!r}")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")

    def lr_at(self, step: int) -> float:
        """Learning rate for 1-based ``step``; cosine decays from lr towards 0 at the last step."""
        if self.lr_schedule == "constant":
            return self.lr
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * (step - 1) / self.steps))

    def to_dict(self):
        d = asdict(self)
        d["vgg"] = self.vgg.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VggTrainConfig":
        d = dict(d)
        if "vgg" in d:
            d["vgg"] = VggConfig(**d["vgg"])
        return cls(**d)


def _labelled(vols: Sequence[Volume]) -> Tuple[np.ndarray, np.ndarray]:
    labels = []
    for v in vols:
        if v.label is None:
            raise ValueError("every corpus volume needs a class label")
        labels.append(CLASS_LABELS.index(v.label))
    return np.stack([v.data for v in vols])[:, None], np.asarray(labels, dtype=np.int64)


def classifier_accuracy(vgg, x: np.ndarray, y: np.ndarray, batch: int = 4) -> Dict[str, float]:
    """Per-class and balanced accuracy in eval mode."""
    was_training = vgg.training
    vgg.eval()
    preds = []
    with no_grad():
        for i in range(0, len(x), batch):
            preds.append(np.argmax(vgg(Tensor(x[i:i + batch])).data, axis=1))
    vgg.train(was_training)
    pred = np.concatenate(preds)
    out = {}
    for c, name in enumerate(CLASS_LABELS):
        mask = y == c
        out[name] = float(np.mean(pred[mask] == c)) if mask.any() else math.nan
    present = [out[n] for n in CLASS_LABELS if not math.isnan(out[n])]
    out["balanced"] = float(np.mean(present))
    return out


def pretrain_vgg(corpus, cfg: VggTrainConfig, eval_set: Optional[Sequence[Volume]] = None) -> TrainResult:
    """Train the VGG classifier with class-balanced CE on a labelled corpus.

    ``corpus`` is a CorpusConfig (phantoms generated here, with a balanced
    held-out eval set) or a list of labelled volumes. Accuracy per class is
    logged every epoch; the returned checkpoint holds a frozen-ready VGG.
    """
    if isinstance(corpus, CorpusConfig):
        vols, eval_vols = corpus.train_volumes(), corpus.eval_volumes()
        corpus_echo = corpus.to_dict()
    else:
        vols, eval_vols, corpus_echo = list(corpus), None, {"volumes": len(corpus)}
    if eval_set is not None:
        eval_vols = list(eval_set)
    x, y = _labelled(vols)
    counts = np.bincount(y, minlength=len(CLASS_LABELS))
    for name, n in zip(CLASS_LABELS, counts):
        if n < 2:
            raise ValueError(f"class {name!r} has {n} volumes; need at least 2 per class")
    ex, ey = _labelled(eval_vols) if eval_vols else (x, y)
    params = CBLossParams(cfg.cb_beta, tuple(int(c) for c in counts))

    vgg = build_vgg3d(cfg.vgg, seed=cfg.seed)
    vgg.check_input(Tensor(x[:1]))
    opt = Adam(vgg.named_parameters(), AdamHyper(lr=cfg.lr))
    epoch = max(1, math.ceil(len(x) / cfg.batch_size))
    every = cfg.eval_every or epoch
    log: List[dict] = []
    vgg.train()
    for step in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        idx = stratified_indices(y, cfg.batch_size, cfg.seed, step)
        loss = class_balanced_ce(vgg(Tensor(x[idx])), y[idx], params)
        backward(loss)
        opt.hyper = replace(opt.hyper, lr=cfg.lr_at(step))
        ok = opt.step()
        opt.zero_grad()
        rec = {"step": step, "loss": {"cb_ce": float(loss.data)}, "lr": opt.hyper.lr,
               "wall_ms": round(1000 * (time.perf_counter() - t0), 3)}
        if not ok:
            rec["skipped"] = ["vgg"]
        if step % every == 0 or step == cfg.steps:
            rec["accuracy"] = classifier_accuracy(vgg, ex, ey)
            logger.info("vgg step %d accuracy %s", step, rec["accuracy"])
        log.append(rec)
    weights = class_balanced_weights(cfg.cb_beta, counts)
    meta = {"class_counts": [int(c) for c in counts], "class_weights": [float(w) for w in weights],
            "accuracy": log[-1]["accuracy"]}
    ck = Checkpoint("vgg", {"vgg_train": cfg.to_dict(), "corpus": corpus_echo},
                    _prefixed("vgg.", vgg.state_dict()), cfg.steps, meta)
    return TrainResult(ck, log)


def load_vgg(ck: Checkpoint):
    """Rebuild a frozen VGG from a pretraining checkpoint."""
    if ck.kind != "vgg":
        raise ValueError(f"expected a VGG checkpoint, got kind {ck.kind!r}")
    cfg = VggTrainConfig.from_dict(ck.config["vgg_train"])
    vgg = build_vgg3d(cfg.vgg, seed=None)
    vgg.load_state_dict(ck.subset("vgg."))
    return freeze(vgg)
