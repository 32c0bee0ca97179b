"""The finite-difference suite behind ``voxsr gradcheck``.

Every case runs in float64 with a fixed seed and reduces its output to a
scalar through a random weighted sum, so each gradient coordinate is exercised
with a distinct weight.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import losses, ops
from .gradcheck import grad_check
from .networks import (DiscriminatorConfig, GeneratorConfig, VggConfig, build_discriminator,
                       build_generator, build_vgg3d, freeze, projection_disc_forward)
from .tensor import Tensor

OP_TOL = 1e-4
NET_TOL = 1e-3


@dataclass
class CaseResult:
    name: str
    group: str
    error: float
    tol: float
    seconds: float

    @property
    def ok(self) -> bool:
        return bool(self.error < self.tol)


def _t(rng, *shape, scale=1.0, grad=True):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=grad, dtype=np.float64)


def _away_from_zero(rng, *shape, margin=0.1):
    x = rng.uniform(margin, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _readout(out: Tensor, seed: int) -> Tensor:
    r = np.random.default_rng(seed).standard_normal(out.shape)
    return ops.sum(ops.mul(out, Tensor(r, dtype=np.float64)))


def _net_params(net):
    return [p for p in net.parameters() if p.requires_grad]


def _cases() -> List[Tuple[str, str, Callable[[], Tuple[Callable, list, Optional[int]]]]]:
    """(name, group, builder); each builder returns (fn, inputs, max_coords)."""

    def conv():
        rng = np.random.default_rng(1)
        x, w, b = _t(rng, 2, 2, 4, 5, 3), _t(rng, 3, 2, 3, 3, 3, scale=0.3), _t(rng, 3)
        return (lambda x, w, b: _readout(ops.conv3d(x, w, b, 1, 1), 11)), [x, w, b], None

    def conv_strided():
        rng = np.random.default_rng(2)
        x, w, b = _t(rng, 2, 2, 5, 4, 6), _t(rng, 2, 2, 3, 3, 3, scale=0.3), _t(rng, 2)
        return (lambda x, w, b: _readout(ops.conv3d(x, w, b, (2, 1, 2), 1), 12)), [x, w, b], None

    def batchnorm():
        rng = np.random.default_rng(3)
        x, g, b = _t(rng, 3, 2, 3, 3, 2), _t(rng, 2), _t(rng, 2)
        rm, rv = np.zeros(2), np.ones(2)
        return (lambda x, g, b: _readout(ops.batchnorm3d(x, g, b, rm, rv, True), 13)), [x, g, b], None

    def act(kind):
        def build():
            rng = np.random.default_rng(4)
            x = _away_from_zero(rng, 2, 2, 3, 3, 3)
            return (lambda x: _readout(ops.activation(x, kind, 0.2), 14)), [x], None
        return build

    def softplus():
        rng = np.random.default_rng(5)
        x = _t(rng, 2, 3, 4, scale=2.0)
        return (lambda x: _readout(ops.softplus(x), 15)), [x], None

    def linear():
        rng = np.random.default_rng(6)
        x, w, b = _t(rng, 3, 5), _t(rng, 4, 5), _t(rng, 4)
        return (lambda x, w, b: _readout(ops.linear(x, w, b), 16)), [x, w, b], None

    def upsample_nearest():
        rng = np.random.default_rng(7)
        x = _t(rng, 2, 2, 3, 2, 3)
        return (lambda x: _readout(ops.upsample_nearest3d(x, (2, 1, 2)), 17)), [x], None

    def interp(mode):
        def build():
            rng = np.random.default_rng(8)
            x = _t(rng, 1, 2, 3, 4, 3)
            return (lambda x: _readout(ops.interp_upsample3d(x, (2, 2, 1), mode), 18)), [x], None
        return build

    def maxpool():
        rng = np.random.default_rng(9)
        x = Tensor(rng.permutation(2 * 2 * 4 * 4 * 4).reshape(2, 2, 4, 4, 4) * 0.01,
                   requires_grad=True, dtype=np.float64)
        return (lambda x: _readout(ops.maxpool3d(x), 19)), [x], None

    def gap():
        rng = np.random.default_rng(10)
        x = _t(rng, 2, 3, 2, 3, 2)
        return (lambda x: _readout(ops.global_avg_pool3d(x), 20)), [x], None

    def log_softmax():
        rng = np.random.default_rng(11)
        x = _t(rng, 4, 3)
        return (lambda x: _readout(ops.log_softmax(x, 1), 21)), [x], None

    def spectral():
        rng = np.random.default_rng(12)
        w = _t(rng, 3, 2, 2, 2, 1)
        return (lambda w: _readout(ops.spectral_normalize(w), 22)), [w], None

    def projection_disc():
        net = build_discriminator(DiscriminatorConfig("pd", base_channels=2, scale=(2, 2, 2)), seed=3)
        net.astype(np.float64)
        rng = np.random.default_rng(13)
        x, y = _t(rng, 2, 1, 6, 6, 6), _t(rng, 2, 1, 3, 3, 3)
        params = _net_params(net)
        return (lambda x, y, *ps: _readout(projection_disc_forward(net, x, y), 23)), [x, y, *params], None

    def pixel_mse():
        rng = np.random.default_rng(14)
        a, b = _t(rng, 2, 1, 3, 3, 3), _t(rng, 2, 1, 3, 3, 3)
        return losses.pixel_mse, [a, b], None

    def adv_d():
        rng = np.random.default_rng(15)
        r, f = _t(rng, 4, 1, scale=2.0), _t(rng, 4, 1, scale=2.0)
        return losses.adv_loss_d, [r, f], None

    def adv_g():
        rng = np.random.default_rng(16)
        return losses.adv_loss_g, [_t(rng, 4, 1, scale=2.0)], None

    def cb_ce():
        rng = np.random.default_rng(17)
        z = _t(rng, 5, 3)
        params = losses.CBLossParams(0.999, (23, 23, 250))
        y = np.array([0, 2, 1, 2, 0])
        return (lambda z: losses.class_balanced_ce(z, y, params)), [z], None

    def perceptual():
        vgg = freeze(build_vgg3d(VggConfig(first_channels=2), seed=4).astype(np.float64))
        rng = np.random.default_rng(18)
        sr, hr = _t(rng, 1, 1, 32, 32, 32, scale=0.3), _t(rng, 1, 1, 32, 32, 32, grad=False, scale=0.3)
        taps = (1.0, 0.5, 0.25, 2.0, 1.0)
        return (lambda sr, hr: losses.perceptual_loss(vgg, sr, hr, taps)), [sr, hr], 24

    def gen_objective():
        vgg = freeze(build_vgg3d(VggConfig(first_channels=2), seed=5).astype(np.float64))
        rng = np.random.default_rng(19)
        sr, hr = _t(rng, 1, 1, 32, 32, 32, scale=0.3), _t(rng, 1, 1, 32, 32, 32, grad=False, scale=0.3)
        fake = _t(rng, 1, 1)
        w = losses.LossWeights(1.0, 0.1, 0.5)
        return (lambda sr, hr, f: losses.generator_objective(sr, hr, f, vgg, w)[0]), [sr, hr, fake], 24

    def generator(kind, scale):
        def build():
            cfg = GeneratorConfig(kind, base_channels=3, num_blocks=1, reduce_channels=2,
                                  rdn_layers_per_block=2, rdn_growth=2, scale=scale)
            net = build_generator(cfg, seed=6).astype(np.float64)
            rng = np.random.default_rng(20)
            x = _t(rng, 2, 1, 3, 4, 3)
            params = _net_params(net)
            return (lambda x, *ps: _readout(net(x), 24)), [x, *params], 12
        return build

    return [
        ("conv3d", "op", conv),
        ("conv3d_strided", "op", conv_strided),
        ("batchnorm3d_train", "op", batchnorm),
        ("relu", "op", act("relu")),
        ("leaky_relu", "op", act("leaky_relu")),
        ("sigmoid", "op", act("sigmoid")),
        ("softplus", "op", softplus),
        ("linear", "op", linear),
        ("upsample_nearest3d", "op", upsample_nearest),
        ("interp_trilinear", "op", interp("trilinear")),
        ("interp_tricubic", "op", interp("tricubic")),
        ("maxpool3d", "op", maxpool),
        ("global_avg_pool3d", "op", gap),
        ("log_softmax", "op", log_softmax),
        ("spectral_normalize", "op", spectral),
        ("projection_disc_forward", "op", projection_disc),
        ("loss_pixel_mse", "op", pixel_mse),
        ("loss_adv_d", "op", adv_d),
        ("loss_adv_g", "op", adv_g),
        ("loss_class_balanced_ce", "op", cb_ce),
        ("loss_perceptual", "op", perceptual),
        ("loss_generator_objective", "op", gen_objective),
        ("net_srresnet_iso", "net", generator("srresnet", (2, 2, 2))),
        ("net_srresnet_aniso", "net", generator("srresnet", (2, 1, 1))),
        ("net_rdn_iso", "net", generator("rdn", (2, 2, 2))),
        ("net_rdn_aniso", "net", generator("rdn", (2, 1, 1))),
    ]


CASE_NAMES = tuple(c[0] for c in _cases())


def run_suite(names=None, eps: float = 1e-6) -> List[CaseResult]:
    results = []
    for name, group, build in _cases():
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        fn, inputs, max_coords = build()
        err = grad_check(fn, inputs, eps=eps, max_coords=max_coords, seed=0)
        tol = OP_TOL if group == "op" else NET_TOL
        results.append(CaseResult(name, group, err, tol, time.perf_counter() - t0))
    return results
