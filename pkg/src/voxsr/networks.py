"""Generators, discriminators and the 3D VGG classifier.

Layer-by-layer parameter counts (k = 27 for a 3x3x3 kernel):

SRResNet-3D with base C, B blocks, reduce R and U upsample stages::

    head        27*C + C
    block       2 * 27*C*C + 2 * 2*C                (two bias-free convs, two BNs)
    pointwise   C*C + C
    reduce      27*C*R + R
    upsample    U * (27*R*R + R)
    tail        27*R + 1

RDN-3D replaces each block by L dense layers with growth G plus a fusion::

    dense i     27*(C + i*G)*G + G                  for i = 0 .. L-1
    fusion      (C + L*G)*C + C

With the defaults (C=64, B=8, R=32, G=16, L=4, isotropic U=1) SRResNet-3D
has 1,861,345 parameters and RDN-3D 1,372,897. The VGG (bias-free conv + BN
blocks of 64..1024 channels, then 1024->512->128->3) has 19,397,187. A conv
that feeds BN carries no bias: BN removes any per-channel shift anyway.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Tuple

from . import ops
from .nn import (Activation, BatchNorm3d, Conv3d, Linear, MaxPool3d, Module, Sequential,
                 Upsample, init_params, param_count)
from .tensor import ShapeError, Tensor

MIN_LR_EXTENT = 3


def _log2_steps(scale) -> Tuple[int, ...]:
    steps = []
    for s in scale:
        s = int(s)
        if s < 1:
            raise ValueError(f"scale components must be >= 1, got {tuple(scale)}")
        if s & (s - 1):
            raise ValueError(f"scale component {s} is not a power of two; upsampling runs in factor-2 stages")
        steps.append(s.bit_length() - 1)
    return tuple(steps)


def _stage_factors(scale) -> List[Tuple[int, int, int]]:
    """Per-stage (fd, fh, fw): 2 on axes that still need doubling, else 1."""
    steps = _log2_steps(scale)
    return [tuple(2 if st > k else 1 for st in steps) for k in range(max(steps, default=0))]


@dataclass
class GeneratorConfig:
    kind: str = "srresnet"
    base_channels: int = 64
    num_blocks: int = 8
    reduce_channels: int = 32
    rdn_layers_per_block: int = 4
    rdn_growth: int = 16
    scale: Tuple[int, int, int] = (2, 2, 2)
    alpha: float = 0.2

    def __post_init__(self):
        self.scale = tuple(int(s) for s in self.scale)
        if self.kind not in ("srresnet", "rdn"):
            raise ValueError(f"generator kind must be 'srresnet' or 'rdn', got {self.kind!r}")
        if min(self.base_channels, self.reduce_channels, self.rdn_growth) < 1:
            raise ValueError("channel counts must be >= 1")
        if self.num_blocks < 0 or self.rdn_layers_per_block < 1:
            raise ValueError("block counts out of range")
        _log2_steps(self.scale)

    def to_dict(self):
        d = asdict(self)
        d["scale"] = list(self.scale)
        return d


@dataclass
class DiscriminatorConfig:
    kind: str = "sd"
    base_channels: int = 32
    scale: Tuple[int, int, int] = (2, 2, 2)
    input_extent: Tuple[int, int, int] = (16, 16, 16)
    spectral_norm: bool = False
    alpha: float = 0.2

    def __post_init__(self):
        self.scale = tuple(int(s) for s in self.scale)
        self.input_extent = tuple(int(s) for s in self.input_extent)
        if self.kind not in ("sd", "pd"):
            raise ValueError(f"discriminator kind must be 'sd' or 'pd', got {self.kind!r}")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        _log2_steps(self.scale)

    def to_dict(self):
        d = asdict(self)
        d["scale"] = list(self.scale)
        d["input_extent"] = list(self.input_extent)
        return d


@dataclass
class VggConfig:
    num_blocks: int = 5
    first_channels: int = 64
    fc_dims: Tuple[int, ...] = (512, 128, 3)
    min_extent: int = 32

    def __post_init__(self):
        self.fc_dims = tuple(self.fc_dims)
        if self.num_blocks != 5:
            raise ValueError("the VGG classifier has exactly 5 convolutional blocks")
        if self.fc_dims[-1] != 3:
            raise ValueError("the classification head ends in 3 logits")

    @property
    def channels(self) -> List[int]:
        return [self.first_channels * 2**i for i in range(self.num_blocks)]

    def to_dict(self):
        d = asdict(self)
        d["fc_dims"] = list(self.fc_dims)
        return d


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------
class ResidualBlock(Module):
    def __init__(self, channels, alpha):
        super().__init__()
        self.body = self.add_module("body", Sequential(
            Conv3d(channels, channels, bias=False), BatchNorm3d(channels), Activation("leaky_relu", alpha),
            Conv3d(channels, channels, bias=False), BatchNorm3d(channels)))

    def forward(self, x):
        return ops.add(self.body(x), x)


class ResidualDenseBlock(Module):
    def __init__(self, channels, layers, growth, alpha):
        super().__init__()
        self.dense = []
        for i in range(layers):
            seq = Sequential(Conv3d(channels + i * growth, growth), Activation("leaky_relu", alpha))
            self.dense.append(self.add_module(f"dense{i}", seq))
        self.fusion = self.add_module("fusion", Conv3d(channels + layers * growth, channels, kernel=1))

    def forward(self, x):
        feats = [x]
        for layer in self.dense:
            feats.append(layer(ops.concat_channels(feats)))
        return ops.add(self.fusion(ops.concat_channels(feats)), x)


class Generator(Module):
    """SRResNet-3D / RDN-3D: features at LR, nearest upsample + conv stages, trilinear global skip."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        C, R, a = cfg.base_channels, cfg.reduce_channels, cfg.alpha
        self.head = self.add_module("head", Sequential(Conv3d(1, C), Activation("leaky_relu", a)))
        if cfg.kind == "srresnet":
            blocks = [ResidualBlock(C, a) for _ in range(cfg.num_blocks)]
        else:
            blocks = [ResidualDenseBlock(C, cfg.rdn_layers_per_block, cfg.rdn_growth, a)
                      for _ in range(cfg.num_blocks)]
        self.body = self.add_module("body", Sequential(*blocks))
        self.pointwise = self.add_module("pointwise", Conv3d(C, C, kernel=1))
        self.reduce = self.add_module("reduce", Sequential(Conv3d(C, R), Activation("leaky_relu", a)))
        self.ups = []
        for i, f in enumerate(_stage_factors(cfg.scale)):
            self.ups.append(self.add_module(
                f"up{i}", Sequential(Upsample(f), Conv3d(R, R), Activation("leaky_relu", a))))
        self.tail = self.add_module("tail", Conv3d(R, 1, gain=0.1))

    def forward(self, lr: Tensor) -> Tensor:
        if lr.ndim != 5 or lr.shape[1] != 1:
            raise ShapeError(f"generator expects (N, 1, d, h, w) input, got {lr.shape}")
        if min(lr.shape[2:]) < MIN_LR_EXTENT:
            raise ShapeError(f"generator input extents {lr.shape[2:]} below the minimum "
                             f"{MIN_LR_EXTENT} voxels per axis")
        h = self.reduce(self.pointwise(self.body(self.head(lr))))
        for up in self.ups:
            h = up(h)
        return ops.add(self.tail(h), ops.interp_upsample3d(lr, self.cfg.scale, "trilinear"))


def build_generator(cfg: GeneratorConfig, seed: int | None = 0) -> Generator:
    net = Generator(cfg)
    if seed is not None:
        init_params(net, seed)
    return net


def generator_forward(net: Generator, lr_batch: Tensor) -> Tensor:
    return net(lr_batch)


# ---------------------------------------------------------------------------
# discriminators
# ---------------------------------------------------------------------------
def _trunk(cfg: DiscriminatorConfig, strides: List[Tuple[int, int, int]]):
    a, sn = cfg.alpha, cfg.spectral_norm
    layers = [Conv3d(1, cfg.base_channels, spectral_norm=sn), Activation("leaky_relu", a)]
    ch = cfg.base_channels
    for st in strides:
        layers += [Conv3d(ch, 2 * ch, stride=st, spectral_norm=sn), Activation("leaky_relu", a)]
        ch *= 2
    return Sequential(*layers), ch


def _sd_strides(extent) -> List[Tuple[int, int, int]]:
    ext, strides = list(extent), []
    while max(ext) > 4:
        st = tuple(2 if e > 4 else 1 for e in ext)
        strides.append(st)
        ext = [(e + 1) // 2 if s == 2 else e for e, s in zip(ext, st)]
    return strides


class StandardDiscriminator(Module):
    """Strided conv trunk down to <= 4 voxels per axis, average pool, one logit."""

    conditional = False

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        trunk, ch = _trunk(cfg, _sd_strides(cfg.input_extent))
        self.trunk = self.add_module("trunk", trunk)
        self.head = self.add_module("head", Linear(ch, 1, spectral_norm=cfg.spectral_norm))

    def forward(self, x: Tensor) -> Tensor:
        return self.head(ops.global_avg_pool3d(self.trunk(x)))


class ProjectionDiscriminator(Module):
    """f(x, y) = sum(y * V(phi(x))) + psi(phi(x)), with phi on the LR grid."""

    conditional = True

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        strides = _stage_factors(cfg.scale)
        trunk, ch = _trunk(cfg, [tuple(2 if f == 2 else 1 for f in st) for st in strides])
        self.phi = self.add_module("phi", trunk)
        self.psi = self.add_module("psi", Linear(ch, 1, spectral_norm=cfg.spectral_norm))
        self.proj = self.add_module("proj", Conv3d(ch, 1, kernel=1, bias=False,
                                                   spectral_norm=cfg.spectral_norm))

    def check_grids(self, x: Tensor, y: Tensor) -> None:
        if x.ndim != 5 or y.ndim != 5:
            raise ShapeError("projection discriminator expects rank-5 x and y")
        want = tuple(n * s for n, s in zip(y.shape[2:], self.cfg.scale))
        if x.shape[2:] != want or x.shape[0] != y.shape[0] or y.shape[1] != 1:
            raise ShapeError(f"projection discriminator grid mismatch: HR {x.shape[2:]} vs LR "
                             f"{y.shape[2:]} at scale {self.cfg.scale}")

    def features(self, x: Tensor) -> Tensor:
        return self.phi(x)

    def forward(self, x: Tensor, y: Tensor) -> Tensor:
        self.check_grids(x, y)
        feat = self.phi(x)
        projection = ops.sum(ops.mul(y, self.proj(feat)), axis=(1, 2, 3, 4), keepdims=False)
        projection = ops.reshape(projection, (x.shape[0], 1))
        return ops.add(projection, self.psi(ops.global_avg_pool3d(feat)))


def build_discriminator(cfg: DiscriminatorConfig, seed: int | None = 0) -> Module:
    net = StandardDiscriminator(cfg) if cfg.kind == "sd" else ProjectionDiscriminator(cfg)
    if seed is not None:
        init_params(net, seed)
    return net


def projection_disc_forward(net: ProjectionDiscriminator, x_hr: Tensor, y_lr: Tensor) -> Tensor:
    return net(x_hr, y_lr)


# ---------------------------------------------------------------------------
# VGG
# ---------------------------------------------------------------------------
class Vgg3d(Module):
    """Five conv-BN-ReLU blocks with 2x max pooling, global average pool, FC head.

    After :meth:`features` or :meth:`forward`, ``self.taps`` holds the five
    post-ReLU, pre-pool block outputs (used by the perceptual loss).
    """

    def __init__(self, cfg: VggConfig):
        super().__init__()
        self.cfg = cfg
        self.blocks = []
        cin = 1
        for i, c in enumerate(cfg.channels):
            self.blocks.append(self.add_module(
                f"block{i}", Sequential(Conv3d(cin, c, bias=False), BatchNorm3d(c), Activation("relu"))))
            cin = c
        self.pool = MaxPool3d()
        dims = [cin, *cfg.fc_dims]
        self.fcs = [self.add_module(f"fc{i}", Linear(dims[i], dims[i + 1]))
                    for i in range(len(cfg.fc_dims))]
        self.taps: List[Tensor] = []

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != 1:
            raise ShapeError(f"VGG expects (N, 1, D, H, W) input, got {x.shape}")
        if min(x.shape[2:]) < self.cfg.min_extent:
            raise ShapeError(f"VGG input extents {x.shape[2:]} below the minimum "
                             f"{self.cfg.min_extent} voxels per axis")

    def features(self, x: Tensor) -> List[Tensor]:
        self.check_input(x)
        taps = []
        h = x
        for block in self.blocks:
            h = block(h)
            taps.append(h)
            h = self.pool(h)
        self.taps = taps
        self._last = h
        return taps

    def forward(self, x: Tensor) -> Tensor:
        self.features(x)
        h = ops.global_avg_pool3d(self._last)
        for i, fc in enumerate(self.fcs):
            h = fc(h)
            if i + 1 < len(self.fcs):
                h = ops.relu(h)
        return h


def build_vgg3d(cfg: VggConfig | None = None, seed: int | None = 0) -> Vgg3d:
    net = Vgg3d(cfg or VggConfig())
    if seed is not None:
        init_params(net, seed)
    return net


def vgg_forward(net: Vgg3d, x: Tensor) -> Tensor:
    return net(x)


def freeze(net: Module) -> Module:
    """Eval mode and no parameter gradients (perceptual-loss use)."""
    net.eval()
    net.requires_grad_(False)
    return net


__all__ = [
    "GeneratorConfig", "DiscriminatorConfig", "VggConfig", "Generator", "StandardDiscriminator",
    "ProjectionDiscriminator", "Vgg3d", "build_generator", "build_discriminator", "build_vgg3d",
    "generator_forward", "projection_disc_forward", "vgg_forward", "param_count", "freeze",
    "MIN_LR_EXTENT",
]
