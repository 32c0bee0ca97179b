"""Training objectives: pixel, adversarial, perceptual and class-balanced CE."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor, no_grad


@dataclass
class LossWeights:
    lambda_pix: float = 1.0
    lambda_adv: float = 1e-3
    lambda_perc: float = 6e-3
    tap_weights: Tuple[float, ...] = field(default_factory=lambda: (1.0, 1.0, 1.0, 1.0, 1.0))

    def __post_init__(self):
        self.tap_weights = tuple(float(w) for w in self.tap_weights)
        vals = (self.lambda_pix, self.lambda_adv, self.lambda_perc, *self.tap_weights)
        if min(vals) < 0:
            raise ValueError("loss weights must be non-negative")
        if max(self.lambda_pix, self.lambda_adv, self.lambda_perc) <= 0:
            raise ValueError("at least one loss weight must be positive")

    def to_dict(self):
        d = asdict(self)
        d["tap_weights"] = list(self.tap_weights)
        return d


@dataclass(frozen=True)
class CBLossParams:
    beta: float
    class_counts: Tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        counts = tuple(int(n) for n in self.class_counts)
        if not counts or min(counts) < 1:
            raise ValueError(f"every class count must be >= 1, got {self.class_counts}")
        object.__setattr__(self, "class_counts", counts)

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)


def class_balanced_weights(beta: float, counts: Sequence[int]) -> np.ndarray:
    """(1 - beta) / (1 - beta**n) per class, evaluated without cancellation."""
    n = np.asarray(counts, dtype=np.float64)
    if beta == 0:
        return np.ones_like(n)
    return (1.0 - beta) / -np.expm1(n * np.log(beta))


def pixel_mse(sr: Tensor, hr: Tensor) -> Tensor:
    if sr.shape != hr.shape:
        raise ShapeError(f"pixel_mse: shape mismatch {sr.shape} vs {hr.shape}")
    return ops.mean(ops.square(ops.sub(sr, hr)))


def adv_loss_d(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    """Logistic discriminator loss: mean[-log s(real)] + mean[-log(1 - s(fake))]."""
    return ops.add(ops.mean(ops.softplus(ops.scale(real_logits, -1.0))),
                   ops.mean(ops.softplus(fake_logits)))


def adv_loss_g(fake_logits: Tensor) -> Tensor:
    """Non-saturating generator loss mean[-log s(fake)]."""
    return ops.mean(ops.softplus(ops.scale(fake_logits, -1.0)))


def perceptual_loss(vgg, sr: Tensor, hr: Tensor, tap_weights: Sequence[float]) -> Tensor:
    """Weighted sum of per-tap MSEs between VGG block outputs of ``sr`` and ``hr``.

    The VGG must be frozen (eval mode, no parameter gradients); only ``sr``
    receives gradient.
    """
    if vgg.training:
        raise ValueError("perceptual_loss needs the VGG in eval mode")
    if any(p.requires_grad for p in vgg.parameters()):
        raise ValueError("perceptual_loss needs frozen VGG parameters (see networks.freeze)")
    if sr.shape != hr.shape:
        raise ShapeError(f"perceptual_loss: shape mismatch {sr.shape} vs {hr.shape}")
    with no_grad():
        hr_taps = [t.detach() for t in vgg.features(hr)]
    sr_taps = vgg.features(sr)
    if len(tap_weights) != len(sr_taps):
        raise ValueError(f"need {len(sr_taps)} tap weights, got {len(tap_weights)}")
    total = None
    for w, a, b in zip(tap_weights, sr_taps, hr_taps):
        if w == 0:
            continue
        term = ops.scale(pixel_mse(a, b), w)
        total = term if total is None else ops.add(total, term)
    if total is None:
        return Tensor(np.zeros((), dtype=sr.dtype))
    return total


def class_balanced_ce(z: Tensor, y, params: CBLossParams) -> Tensor:
    """Batch mean of -w_y * log softmax(z)_y with w_y = (1-beta)/(1-beta^n_y)."""
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    N, C = z.shape
    if C != params.num_classes:
        raise ShapeError(f"logits have {C} classes but counts cover {params.num_classes}")
    if labels.shape[0] != N:
        raise ShapeError(f"{labels.shape[0]} labels for {N} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"labels must lie in [0, {C}), got {labels.tolist()}")
    w = class_balanced_weights(params.beta, params.class_counts)
    coef = np.zeros((N, C), dtype=z.dtype)
    coef[np.arange(N), labels] = -w[labels] / N
    return ops.sum(ops.mul(ops.log_softmax(z, axis=1), Tensor(coef)))


def generator_objective(sr: Tensor, hr: Tensor, disc_fake_logits: Optional[Tensor], vgg,
                        weights: LossWeights) -> Tuple[Tensor, Dict[str, float]]:
    """Weighted pixel + adversarial + perceptual loss and its per-term breakdown.

    Terms with zero weight (or no discriminator / VGG) are skipped entirely.
    The breakdown holds the raw term values and the weighted total.
    """
    terms = {}
    total = None

    def _acc(name, value, lam):
        nonlocal total
        terms[name] = float(value.data)
        part = ops.scale(value, lam)
        total = part if total is None else ops.add(total, part)

    if weights.lambda_pix > 0:
        _acc("pix", pixel_mse(sr, hr), weights.lambda_pix)
    if weights.lambda_adv > 0 and disc_fake_logits is not None:
        _acc("adv", adv_loss_g(disc_fake_logits), weights.lambda_adv)
    if weights.lambda_perc > 0 and vgg is not None:
        _acc("perc", perceptual_loss(vgg, sr, hr, weights.tap_weights), weights.lambda_perc)
    if total is None:
        total = Tensor(np.zeros((), dtype=sr.dtype))
    terms["total"] = float(total.data)
    return total, terms
