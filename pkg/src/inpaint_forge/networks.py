"""Generator and discriminator architectures.

The generator is a cascade of U-nets: each stage maps the current
estimate (plus an optional mask channel) to a refined full image through
4x4 stride-2 convolutions down to a small bottleneck and mirrored
transposed convolutions with skip concatenation back up, tanh at the end.

Discriminators are patch classifiers built from (kernel, stride, width)
ladders; the score map is a sigmoid per patch, clamped into the open
interval so downstream logs never see 0 or 1. The global one is
conditioned (score map judges the repaired image against its context),
the local one sees only the repaired region.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import nn
from .errors import ValidationError

SCORE_EPS = 1e-7

GLOBAL_LAYERS = ((4, 2, 64), (4, 2, 128), (4, 2, 256), (4, 1, 512), (4, 1, 1))
LOCAL_LAYERS = ((4, 2, 64), (4, 2, 128), (4, 1, 256), (4, 1, 1))
GLOBAL_PATCH = 70
LOCAL_PATCH = 34


def receptive_field(layers):
    """Input pixels seen by one output unit of a (k, s, ...) conv ladder."""
    rf, jump = 1, 1
    for k, s, *_ in layers:
        rf += (k - 1) * jump
        jump *= s
    return rf


def score_map_size(size, layers, padding=1):
    """Spatial extent of the patch score map for a square input."""
    for k, s, *_ in layers:
        size = (size + 2 * padding - k) // s + 1
        if size < 1:
            raise ValidationError("input too small for the discriminator ladder")
    return size


@dataclass(frozen=True)
class GeneratorSpec:
    num_unets: int = 3
    base_channels: int = 32
    depth: int = 6
    max_channels: int = 256

    def __post_init__(self):
        if not 1 <= self.num_unets <= 6:
            raise ValidationError(f"num_unets must be 1..6, got {self.num_unets}")
        if self.depth < 2:
            raise ValidationError(f"generator depth must be >= 2, got {self.depth}")
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            raise ValidationError("generator channel plan is inconsistent")

    def validate_image_size(self, size):
        step = 2**self.depth
        if size % step or size < step:
            raise ValidationError(
                f"image size {size} incompatible with depth {self.depth}; "
                f"needs a multiple of {step}"
            )


@dataclass(frozen=True)
class DiscriminatorSpec:
    layers: tuple = GLOBAL_LAYERS
    patch_size: int = GLOBAL_PATCH
    conditioned: bool = True

    def __post_init__(self):
        rf = receptive_field(self.layers)
        if rf != self.patch_size:
            raise ValidationError(
                f"declared patch size {self.patch_size} but the ladder sees {rf}"
            )
        if self.layers[-1][2] != 1:
            raise ValidationError("discriminator must end in a 1-channel score conv")


@dataclass
class PatchScoreMap:
    """Per-patch real/fake scores, strictly inside (0, 1)."""

    scores: ag.Tensor

    def __post_init__(self):
        d = self.scores.data
        if d.ndim != 4 or d.shape[1] != 1:
            raise ValidationError(f"score map must be (n,1,h,w), got {d.shape}")
        if d.min() <= 0.0 or d.max() >= 1.0:
            raise ValidationError("score map left the open interval (0,1)")


@dataclass
class FeatureStack:
    """Discriminator activations, index 0 being the raw input."""

    tensors: list = field(default_factory=list)

    def __len__(self):
        return len(self.tensors)


class _EncBlock(nn.Module):
    def __init__(self, cin, cout, rng):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 4, stride=2, padding=1, rng=rng)
        self.bn = nn.BatchNorm2d(cout, rng=rng)

    def forward(self, x):
        return ag.leaky_relu(self.bn(self.conv(x)), 0.2)


class _DecBlock(nn.Module):
    def __init__(self, cin, cout, rng):
        super().__init__()
        self.conv = nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1, rng=rng)
        self.bn = nn.BatchNorm2d(cout, rng=rng)

    def forward(self, x):
        return ag.relu(self.bn(self.conv(x)))


class UNet(nn.Module):
    def __init__(self, in_channels, out_channels, spec, rng):
        super().__init__()
        ch = [min(spec.base_channels * 2**i, spec.max_channels) for i in range(spec.depth)]
        self.depth = spec.depth
        self.enc = nn.ModuleList()
        cin = in_channels
        for c in ch:
            self.enc.append(_EncBlock(cin, c, rng))
            cin = c
        self.dec = nn.ModuleList()
        dec_in = ch[-1]
        for j in range(spec.depth - 1):
            tgt = ch[spec.depth - 2 - j]
            self.dec.append(_DecBlock(dec_in, tgt, rng))
            dec_in = 2 * tgt
        self.final = nn.ConvTranspose2d(dec_in, out_channels, 4, stride=2, padding=1, rng=rng)

    def forward(self, x):
        skips = []
        h = x
        for blk in self.enc:
            h = blk(h)
            skips.append(h)
        for j, blk in enumerate(self.dec):
            h = blk(h)
            h = ag.concat([h, skips[self.depth - 2 - j]], axis=1)
        return ag.tanh(self.final(h))


class CasNet(nn.Module):
    """Chain of U-nets; each refines the previous full-image estimate."""

    def __init__(self, spec, rng, use_mask_channel=False):
        super().__init__()
        self.spec = spec
        self.use_mask_channel = bool(use_mask_channel)
        in_ch = 2 if self.use_mask_channel else 1
        self.unets = nn.ModuleList(
            [UNet(in_ch, 1, spec, rng) for _ in range(spec.num_unets)]
        )

    def forward(self, context, mask=None):
        if self.use_mask_channel:
            if mask is None:
                raise ValidationError("generator configured with a mask channel")
        elif mask is not None:
            raise ValidationError("generator not configured for a mask channel")
        cur = context
        for u in self.unets:
            inp = ag.concat([cur, mask], axis=1) if self.use_mask_channel else cur
            cur = u(inp)
        return cur


class PatchDiscriminator(nn.Module):
    """Conv ladder scoring overlapping patches; keeps its activation stack."""

    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        self.convs = nn.ModuleList()
        self.bns = nn.ModuleList()
        self._has_bn = []
        cin = 2 if spec.conditioned else 1
        last = len(spec.layers) - 1
        for i, (k, s, cout) in enumerate(spec.layers):
            self.convs.append(nn.Conv2d(cin, cout, k, stride=s, padding=1, rng=rng))
            # first and scoring convs run without normalization
            if 0 < i < last:
                self.bns.append(nn.BatchNorm2d(cout, rng=rng))
                self._has_bn.append(True)
            else:
                self._has_bn.append(False)
            cin = cout

    def forward(self, x, y=None):
        """Returns (PatchScoreMap, FeatureStack); stack[0] is the raw input."""
        if self.spec.conditioned:
            if y is None:
                raise ValidationError("conditioned discriminator needs the context")
            h = ag.concat([x, y], axis=1)
        else:
            if y is not None:
                raise ValidationError("unconditioned discriminator takes one input")
            h = x
        feats = [h]
        bn_idx = 0
        last = len(self.convs) - 1
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if self._has_bn[i]:
                h = self.bns[bn_idx](h)
                bn_idx += 1
            if i < last:
                h = ag.leaky_relu(h, 0.2)
            else:
                h = ag.clip(ag.sigmoid(h), SCORE_EPS, 1.0 - SCORE_EPS)
            feats.append(h)
        return PatchScoreMap(h), FeatureStack(feats)


def build_casnet(spec, seed, use_mask_channel=False):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    return CasNet(spec, rng, use_mask_channel)


def build_global_discriminator(seed, spec=None):
    spec = spec or DiscriminatorSpec(GLOBAL_LAYERS, GLOBAL_PATCH, conditioned=True)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 202]))
    return PatchDiscriminator(spec, rng)


def build_local_discriminator(seed, spec=None):
    spec = spec or DiscriminatorSpec(LOCAL_LAYERS, LOCAL_PATCH, conditioned=False)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 303]))
    return PatchDiscriminator(spec, rng)
