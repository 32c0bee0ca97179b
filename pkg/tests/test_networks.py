import numpy as np
import pytest

from oracles import eq2_oracle
from voxsr import ops
from voxsr.networks import (MIN_LR_EXTENT, DiscriminatorConfig, GeneratorConfig, VggConfig, build_discriminator,
                            build_generator, build_vgg3d, projection_disc_forward)
from voxsr.nn import Conv3d, Module, init_params, param_count
from voxsr.tensor import ShapeError, Tensor, backward, no_grad

SMALL = dict(base_channels=4, num_blocks=1, reduce_channels=3, rdn_layers_per_block=2, rdn_growth=2)


def rand(rng, *shape, grad=False):
    return Tensor(rng.standard_normal(shape), requires_grad=grad)


# -- generators -----------------------------------------------------------------------
@pytest.mark.parametrize("kind", ["srresnet", "rdn"])
@pytest.mark.parametrize("scale", [(2, 2, 2), (2, 1, 1)])
def test_generator_shape_contract(kind, scale):
    net = build_generator(GeneratorConfig(kind, scale=scale, **SMALL), seed=0)
    net.eval()
    rng = np.random.default_rng([len(kind), *scale])
    with no_grad():
        for _ in range(20):
            n = int(rng.integers(1, 3))
            d, h, w = (int(v) for v in rng.integers(MIN_LR_EXTENT, 9, size=3))
            out = net(Tensor(rng.uniform(size=(n, 1, d, h, w)).astype(np.float32)))
            assert out.shape == (n, 1, d * scale[0], h * scale[1], w * scale[2])


def test_generator_documented_examples():
    with no_grad():
        g = build_generator(GeneratorConfig(scale=(2, 2, 2), **SMALL)).eval()
        assert g(Tensor(np.zeros((1, 1, 8, 8, 8), np.float32))).shape == (1, 1, 16, 16, 16)
        g = build_generator(GeneratorConfig(scale=(2, 1, 1), **SMALL)).eval()
        assert g(Tensor(np.zeros((1, 1, 8, 16, 16), np.float32))).shape == (1, 1, 16, 16, 16)


def test_generator_rejections():
    with pytest.raises(ValueError, match="power of two"):
        GeneratorConfig(scale=(3, 1, 1))
    with pytest.raises(ValueError):
        GeneratorConfig(scale=(0, 1, 1))
    g = build_generator(GeneratorConfig(**SMALL))
    with pytest.raises(ShapeError, match="minimum"):
        g(Tensor(np.zeros((1, 1, 2, 8, 8), np.float32)))
    with pytest.raises(ShapeError):
        g(Tensor(np.zeros((1, 2, 8, 8, 8), np.float32)))


def srresnet_count(C, B, R, U):
    return (27 * C + C) + B * (2 * 27 * C * C + 4 * C) + (C * C + C) + (27 * C * R + R) \
        + U * (27 * R * R + R) + (27 * R + 1)


def rdn_count(C, B, R, U, L, G):
    rdb = sum(27 * (C + i * G) * G + G for i in range(L)) + (C + L * G) * C + C
    return (27 * C + C) + B * rdb + (C * C + C) + (27 * C * R + R) + U * (27 * R * R + R) + (27 * R + 1)


def test_generator_parameter_counts_match_closed_form():
    assert param_count(build_generator(GeneratorConfig(), seed=None)) == srresnet_count(64, 8, 32, 1) == 1_861_345
    assert param_count(build_generator(GeneratorConfig("rdn"), seed=None)) == rdn_count(64, 8, 32, 1, 4, 16) \
        == 1_372_897
    cfg = GeneratorConfig("rdn", 5, 3, 4, 3, 2, (4, 2, 1))
    assert param_count(build_generator(cfg, seed=None)) == rdn_count(5, 3, 4, 2, 3, 2)


@pytest.mark.parametrize("kind", ["srresnet", "rdn"])
def test_generator_eval_determinism_and_init_drift(kind):
    g = build_generator(GeneratorConfig(kind, base_channels=16, num_blocks=2, reduce_channels=8), seed=3).eval()
    x = Tensor(np.full((1, 1, 6, 6, 6), 0.4, np.float32))
    with no_grad():
        a, b = g(x).data, g(x).data
    assert a.tobytes() == b.tobytes()
    skip = ops.interp_upsample3d(x, (2, 2, 2), "trilinear").data
    assert np.abs(a - skip).max() <= 0.5


def test_generator_has_no_final_activation():
    g = build_generator(GeneratorConfig(**SMALL), seed=1).eval()
    with no_grad():
        out = g(Tensor(np.full((1, 1, 4, 4, 4), -50.0, np.float32))).data
    assert np.abs(out).max() > 1.0 and out.min() < 0


# -- discriminators ------------------------------------------------------------------------
def test_sd_logit_shape():
    d = build_discriminator(DiscriminatorConfig("sd", 4, input_extent=(16, 16, 16)))
    assert d(Tensor(np.zeros((3, 1, 16, 16, 16), np.float32))).shape == (3, 1)


def test_pd_feature_grid_alignment():
    d = build_discriminator(DiscriminatorConfig("pd", 2, scale=(2, 2, 2)))
    assert d.features(Tensor(np.zeros((1, 1, 16, 16, 16), np.float32))).shape[2:] == (8, 8, 8)
    d = build_discriminator(DiscriminatorConfig("pd", 2, scale=(2, 1, 1)))
    assert d.features(Tensor(np.zeros((1, 1, 16, 12, 10), np.float32))).shape[2:] == (8, 12, 10)
    strides = [m.stride for _, m in d.named_modules() if isinstance(m, Conv3d) and m.stride != (1, 1, 1)]
    assert strides == [(2, 1, 1)]


def test_pd_rejects_misaligned_grids():
    d = build_discriminator(DiscriminatorConfig("pd", 2, scale=(2, 2, 2)))
    x = Tensor(np.zeros((1, 1, 8, 8, 8), np.float32))
    for bad in [(1, 1, 4, 4, 3), (1, 1, 8, 8, 8), (2, 1, 4, 4, 4), (1, 2, 4, 4, 4)]:
        with pytest.raises(ShapeError, match="mismatch"):
            d(x, Tensor(np.zeros(bad, np.float32)))
    d = build_discriminator(DiscriminatorConfig("pd", 2, scale=(2, 1, 1)))
    with pytest.raises(ShapeError):
        d(x, Tensor(np.zeros((1, 1, 4, 4, 4), np.float32)))


def test_pd_matches_eq2_oracle_over_50_seeds():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        scale = [(2, 2, 2), (2, 1, 1), (4, 2, 1)][seed % 3]
        lr = tuple(int(v) for v in rng.integers(1, 5, size=3))
        net = build_discriminator(DiscriminatorConfig("pd", 3, scale=scale), seed=seed).astype(np.float64)
        rng2 = np.random.default_rng(1000 + seed)
        for p in net.parameters():  # non-zero biases so psi's offset is exercised
            p.data = rng2.standard_normal(p.shape) * 0.3
        N = int(rng.integers(1, 3))
        x = rand(rng, N, 1, *(a * s for a, s in zip(lr, scale)))
        y = rand(rng, N, 1, *lr)
        got = projection_disc_forward(net, x, y).data
        np.testing.assert_allclose(got, eq2_oracle(net, x, y.data), atol=1e-6, rtol=0)


def test_pd_zero_condition_and_single_voxel():
    rng = np.random.default_rng(0)
    net = build_discriminator(DiscriminatorConfig("pd", 2, scale=(2, 2, 2)), seed=1).astype(np.float64)
    x = rand(rng, 2, 1, 4, 4, 4)
    with no_grad():
        f0 = net(x, Tensor(np.zeros((2, 1, 2, 2, 2)))).data
        psi = net.psi(ops.global_avg_pool3d(net.phi(x))).data
    np.testing.assert_array_equal(f0, psi)
    x1 = rand(rng, 1, 1, 2, 2, 2)
    y1 = Tensor(np.full((1, 1, 1, 1, 1), 1.7))
    with no_grad():
        feat = net.phi(x1)
        F0 = float(net.proj(feat).data.ravel()[0])
        psi1 = float(net.psi(ops.global_avg_pool3d(feat)).data[0, 0])
        f = float(net(x1, y1).data[0, 0])
    assert f == pytest.approx(1.7 * F0 + psi1, abs=1e-12)


def test_pd_gradient_wrt_condition_is_projection_map():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        net = build_discriminator(DiscriminatorConfig("pd", 3, scale=(2, 1, 1)), seed=seed).astype(np.float64)
        x = rand(rng, 2, 1, 6, 4, 4)
        y = rand(rng, 2, 1, 3, 4, 4, grad=True)
        f = net(x, y)
        backward(ops.sum(f))
        with no_grad():
            F = net.proj(net.phi(x)).data
        np.testing.assert_allclose(y.grad, F, atol=1e-6, rtol=0)


# -- VGG ----------------------------------------------------------------------------------
def test_vgg_taps_logits_and_determinism():
    net = build_vgg3d(VggConfig(first_channels=2), seed=0).eval()
    x = Tensor(np.random.default_rng(0).uniform(size=(2, 1, 32, 32, 32)).astype(np.float32))
    with no_grad():
        a = net(x).data
        grids = [t.shape[2:] for t in net.taps]
        chans = [t.shape[1] for t in net.taps]
        b = net(x).data
    assert a.shape == (2, 3) and a.tobytes() == b.tobytes()
    assert grids == [(32,) * 3, (16,) * 3, (8,) * 3, (4,) * 3, (2,) * 3]
    assert chans == [2, 4, 8, 16, 32]
    with pytest.raises(ShapeError, match="minimum"):
        net(Tensor(np.zeros((1, 1, 32, 31, 32), np.float32)))


def test_vgg_config_and_parameter_count():
    assert VggConfig().channels == [64, 128, 256, 512, 1024]
    with pytest.raises(ValueError):
        VggConfig(num_blocks=4)
    ch = [1, 64, 128, 256, 512, 1024]
    expected = sum(27 * a * b + 2 * b for a, b in zip(ch, ch[1:])) + 1024 * 512 + 512 + 512 * 128 + 128 + 128 * 3 + 3
    assert param_count(build_vgg3d(seed=None)) == expected == 19_397_187


# -- parameters -------------------------------------------------------------------------------
def test_param_count_and_init_examples():
    assert param_count(Module()) == 0
    assert param_count(Conv3d(1, 1)) == 28
    a = build_generator(GeneratorConfig(**SMALL), seed=9)
    b = build_generator(GeneratorConfig(**SMALL), seed=9)
    c = build_generator(GeneratorConfig(**SMALL), seed=10)
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)
    assert any(sa[k].tobytes() != sc[k].tobytes() for k in sa)
    conv = Conv3d(4, 6)
    init_params(conv, 0)
    assert np.all(conv.bias.data == 0)
    assert abs(conv.weight.data.std() * np.sqrt(4 * 27) - 1) < 0.15


def test_parameter_names_unique():
    for net in [build_generator(GeneratorConfig("rdn", **{**SMALL, "num_blocks": 2})),
                build_discriminator(DiscriminatorConfig("pd")), build_vgg3d(VggConfig(first_channels=2))]:
        names = [n for n, _ in net.named_parameters()]
        assert len(names) == len(set(names))
