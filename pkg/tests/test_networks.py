"""Architecture geometry, forward shapes, and spec validation."""

import numpy as np
import pytest

from inpaint_forge import autograd as ag
from inpaint_forge import networks as nets
from inpaint_forge.errors import ValidationError


def tiny_gen_spec(**kw):
    base = dict(num_unets=1, base_channels=4, depth=3, max_channels=16)
    base.update(kw)
    return nets.GeneratorSpec(**base)


def tiny_disc_spec(conditioned=False):
    # (4,2)(4,1) ladder: rf = 1 + 3 + 3*2 = 10
    return nets.DiscriminatorSpec(
        layers=((4, 2, 8), (4, 1, 1)), patch_size=10, conditioned=conditioned
    )


# -- receptive field and score map geometry ---------------------------------------


def test_shipped_receptive_fields():
    assert nets.receptive_field(nets.GLOBAL_LAYERS) == 70
    assert nets.receptive_field(nets.LOCAL_LAYERS) == 34
    assert nets.GLOBAL_PATCH == 70 and nets.LOCAL_PATCH == 34


def test_receptive_field_recurrence_cases():
    assert nets.receptive_field(((3, 1),)) == 3
    assert nets.receptive_field(((4, 2), (4, 2))) == 10  # 1+3+3*2
    assert nets.receptive_field(((4, 2), (4, 2), (4, 1))) == 22  # +3*4


def test_score_map_sizes():
    # stride plan halves three times then two stride-1 stages shave 1 each
    assert nets.score_map_size(256, nets.GLOBAL_LAYERS) == 30
    assert nets.score_map_size(128, nets.GLOBAL_LAYERS) == 14
    assert nets.score_map_size(64, nets.LOCAL_LAYERS) == 14
    assert nets.score_map_size(32, nets.LOCAL_LAYERS) == 6
    with pytest.raises(ValidationError):
        nets.score_map_size(4, nets.GLOBAL_LAYERS)


def test_forward_map_size_matches_formula():
    d = nets.PatchDiscriminator(tiny_disc_spec(), np.random.default_rng(0))
    x = ag.Tensor(np.zeros((2, 1, 32, 32), dtype=np.float32))
    score, _ = d(x)
    want = nets.score_map_size(32, ((4, 2, 8), (4, 1, 1)))
    assert score.scores.data.shape == (2, 1, want, want)


# -- spec validation -----------------------------------------------------------------


def test_generator_spec_validation():
    with pytest.raises(ValidationError):
        nets.GeneratorSpec(num_unets=0)
    with pytest.raises(ValidationError):
        nets.GeneratorSpec(num_unets=7)
    with pytest.raises(ValidationError):
        nets.GeneratorSpec(depth=1)
    with pytest.raises(ValidationError):
        nets.GeneratorSpec(base_channels=64, max_channels=32)
    spec = tiny_gen_spec(depth=3)
    spec.validate_image_size(32)
    with pytest.raises(ValidationError):
        spec.validate_image_size(36)  # not a multiple of 8
    with pytest.raises(ValidationError):
        spec.validate_image_size(4)  # smaller than one bottleneck step


def test_discriminator_spec_validation():
    with pytest.raises(ValidationError):
        nets.DiscriminatorSpec(layers=nets.GLOBAL_LAYERS, patch_size=69)
    with pytest.raises(ValidationError):
        nets.DiscriminatorSpec(layers=((4, 2, 8), (4, 1, 3)), patch_size=10)
    # defaults are internally consistent
    nets.DiscriminatorSpec()
    nets.DiscriminatorSpec(nets.LOCAL_LAYERS, nets.LOCAL_PATCH, conditioned=False)


def test_patch_score_map_rejects_bad_values():
    with pytest.raises(ValidationError):
        nets.PatchScoreMap(ag.Tensor(np.full((1, 1, 2, 2), 1.0)))
    with pytest.raises(ValidationError):
        nets.PatchScoreMap(ag.Tensor(np.full((1, 2, 2, 2), 0.5)))
    nets.PatchScoreMap(ag.Tensor(np.full((1, 1, 2, 2), 0.5)))


# -- generator ------------------------------------------------------------------------


def test_casnet_output_shape_and_range():
    gen = nets.build_casnet(tiny_gen_spec(num_unets=2), seed=0)
    x = ag.Tensor(np.random.default_rng(0).uniform(-1, 1, (2, 1, 32, 32)).astype(np.float32))
    y = gen(x)
    assert y.data.shape == (2, 1, 32, 32)
    # tanh output
    assert float(y.data.min()) > -1.0 and float(y.data.max()) < 1.0


def test_casnet_mask_channel_contract():
    plain = nets.build_casnet(tiny_gen_spec(), seed=0)
    masked = nets.build_casnet(tiny_gen_spec(), seed=0, use_mask_channel=True)
    x = ag.Tensor(np.zeros((1, 1, 16, 16), dtype=np.float32))
    m = ag.Tensor(np.zeros((1, 1, 16, 16), dtype=np.float32))
    with pytest.raises(ValidationError):
        plain(x, m)  # mask given but not configured
    with pytest.raises(ValidationError):
        masked(x)  # mask required
    out = masked(x, m)
    assert out.data.shape == (1, 1, 16, 16)


def test_casnet_channel_plan_cap():
    gen = nets.build_casnet(
        nets.GeneratorSpec(num_unets=1, base_channels=8, depth=4, max_channels=16),
        seed=1,
    )
    enc = gen.unets[0].enc
    widths = [blk.conv.weight.data.shape[0] for blk in enc]
    assert widths == [8, 16, 16, 16]  # doubling stops at max_channels


def test_builders_are_seed_deterministic():
    a = nets.build_casnet(tiny_gen_spec(), seed=5)
    b = nets.build_casnet(tiny_gen_spec(), seed=5)
    c = nets.build_casnet(tiny_gen_spec(), seed=6)
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert any(not np.array_equal(sa[k], sc[k]) for k in sa)


def test_generator_and_discriminator_streams_differ():
    # same seed, different derived streams: weights must not coincide
    g = nets.build_casnet(tiny_gen_spec(), seed=9)
    d = nets.build_global_discriminator(9)
    gw = g.unets[0].enc[0].conv.weight.data
    dw = d.convs[0].weight.data
    assert gw.shape != dw.shape or not np.allclose(gw, dw)


# -- discriminators ---------------------------------------------------------------------


def test_global_discriminator_conditioning_contract():
    d = nets.build_global_discriminator(0)
    x = ag.Tensor(np.zeros((1, 1, 128, 128), dtype=np.float32))
    with pytest.raises(ValidationError):
        d(x)  # context required
    score, stack = d(x, x)
    assert score.scores.data.shape == (1, 1, 14, 14)
    assert len(stack) == len(nets.GLOBAL_LAYERS) + 1  # raw input + every layer
    assert stack.tensors[0].data.shape == (1, 2, 128, 128)  # concat(x, y)


def test_local_discriminator_unconditioned_contract():
    d = nets.build_local_discriminator(0)
    x = ag.Tensor(np.zeros((2, 1, 64, 64), dtype=np.float32))
    with pytest.raises(ValidationError):
        d(x, x)  # no context allowed
    score, stack = d(x)
    assert score.scores.data.shape == (2, 1, 14, 14)
    assert len(stack) == len(nets.LOCAL_LAYERS) + 1
    assert stack.tensors[0].data.shape == (2, 1, 64, 64)


def test_discriminator_normalization_plan():
    d = nets.build_global_discriminator(0)
    # BN on all hidden convs except the first; never on the scoring conv
    assert d._has_bn == [False, True, True, True, False]
    assert len(d.bns) == 3


def test_score_clamp_under_saturation():
    d = nets.PatchDiscriminator(tiny_disc_spec(), np.random.default_rng(0))
    # enormous inputs push the sigmoid to its rails; clamp must keep the
    # scores strictly inside (0,1) so log stays finite
    x = ag.Tensor(np.full((1, 1, 32, 32), 1e6, dtype=np.float32))
    score, _ = d(x)
    s = score.scores.data
    assert s.min() >= nets.SCORE_EPS
    assert s.max() <= 1.0 - nets.SCORE_EPS


def test_init_statistics():
    gen = nets.build_casnet(
        nets.GeneratorSpec(num_unets=1, base_channels=32, depth=3, max_channels=128),
        seed=0,
    )
    w = gen.unets[0].enc[1].conv.weight.data  # 32->64 4x4: plenty of samples
    assert abs(float(w.mean())) < 0.005
    assert float(w.std()) == pytest.approx(0.02, abs=0.003)


def test_gradients_reach_generator_through_discriminator():
    gen = nets.build_casnet(tiny_gen_spec(), seed=3)
    disc = nets.PatchDiscriminator(tiny_disc_spec(conditioned=True), np.random.default_rng(4))
    ctx = ag.Tensor(np.random.default_rng(5).uniform(-1, 1, (1, 1, 16, 16)).astype(np.float32))
    fake = gen(ctx)
    score, _ = disc(fake, ctx)
    loss = ag.tmean(ag.mul(ag.log(score.scores), -1.0))
    loss.backward()
    missing = [n for n, p in gen.named_parameters() if p.grad is None]
    assert missing == []
