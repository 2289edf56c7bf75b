"""Adversarial, style, and perceptual training losses.

Scores are probabilities in the open interval (0,1); the log terms clamp
once more defensively, so a raw tensor can be fed during testing. The
generator maximizes log-score (non-saturating form); discriminator loss
averages the real and fake binary cross-entropy halves.

Style compares channel Gram products of extractor features, each layer
scaled by 1/(4 d^2) with d the feature volume c*h*w (or just c when
`gram_mode="channels"`). The perceptual term is a mean absolute gap
between discriminator activation stacks, the raw input counting as
stack entry 0.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import ValidationError
from .networks import SCORE_EPS, FeatureStack, PatchScoreMap


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.8  # adversarial (global)
    lambda2: float = 0.2  # adversarial (local)
    lambda3: float = 1e-4  # style
    lambda4: float = 1e-4  # perceptual

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")


def composite_weights():
    """Full objective: both discriminators plus style and perceptual terms."""
    return LossWeights(0.8, 0.2, 1e-4, 1e-4)


def no_local_weights():
    """Ablation without the local branch."""
    return LossWeights(1.0, 0.0, 1e-4, 1e-4)


def _scores(x):
    if isinstance(x, PatchScoreMap):
        x = x.scores
    return ag.clip(x, SCORE_EPS, 1.0 - SCORE_EPS)


def adversarial_g_loss(fake):
    """mean(-log D(fake)): push generated patches toward 'real'."""
    return ag.tmean(ag.mul(ag.log(_scores(fake)), -1.0))


def adversarial_d_loss(real, fake):
    """Average BCE over the real and fake halves."""
    r = ag.tmean(ag.log(_scores(real)))
    f = ag.tmean(ag.log(ag.sub(1.0, _scores(fake))))
    return ag.mul(ag.add(r, f), -0.5)


def gram_matrix(feats):
    """Unnormalized channel Gram products, (n,c,h,w) -> (n,c,c)."""
    return ag.gram(feats)


def _feature_dim(shape, gram_mode):
    c, h, w = shape[1], shape[2], shape[3]
    if gram_mode == "volume":
        return float(c * h * w)
    if gram_mode == "channels":
        return float(c)
    raise ValidationError(f"unknown gram_mode {gram_mode!r}")


def style_loss(hat_feats, target, layer_weights=None, gram_mode="volume"):
    """Weighted squared Gram gaps, batch-averaged.

    `hat_feats` maps layer name to feature Tensor. `target` maps the same
    layers either to feature tensors (ndim 4) or to precomputed Gram
    arrays (ndim 3), which is what the training cache stores.
    """
    layers = list(hat_feats)
    weights = _layer_weights(layers, layer_weights)
    total = None
    for name in layers:
        f = hat_feats[name]
        n = f.data.shape[0]
        tgt = ag.as_tensor(target[name])
        tgt_gram = gram_matrix(tgt) if tgt.data.ndim == 4 else tgt
        d = _feature_dim(f.data.shape, gram_mode)
        diff = ag.sub(gram_matrix(f), tgt_gram)
        scale = weights[name] / (4.0 * d * d * n)
        term = ag.mul(ag.tsum(ag.mul(diff, diff)), scale)
        total = term if total is None else ag.add(total, term)
    return total


def perceptual_loss(hat_stack, ref_stack, layer_weights=None):
    """Weighted mean absolute gaps between two discriminator stacks."""
    if isinstance(hat_stack, FeatureStack):
        hat_stack = hat_stack.tensors
    if isinstance(ref_stack, FeatureStack):
        ref_stack = ref_stack.tensors
    if len(hat_stack) != len(ref_stack):
        raise ValidationError("perceptual stacks differ in length")
    n = len(hat_stack)
    if layer_weights is None:
        layer_weights = [1.0 / n] * n
    if len(layer_weights) != n:
        raise ValidationError(
            f"{len(layer_weights)} perceptual weights for {n} stack entries"
        )
    total = None
    for w, h, r in zip(layer_weights, hat_stack, ref_stack):
        if h.data.shape != (r.data.shape if isinstance(r, ag.Tensor) else r.shape):
            raise ValidationError("perceptual stack shapes disagree")
        term = ag.mul(ag.tmean(ag.absolute(ag.sub(h, r))), float(w))
        total = term if total is None else ag.add(total, term)
    return total


def _layer_weights(layers, layer_weights):
    if layer_weights is None:
        u = 1.0 / len(layers)
        return {name: u for name in layers}
    if len(layer_weights) != len(layers):
        raise ValidationError(
            f"{len(layer_weights)} style weights for {len(layers)} layers"
        )
    if isinstance(layer_weights, dict):
        missing = [l for l in layers if l not in layer_weights]
        if missing:
            raise ValidationError(f"style weights missing layers: {missing}")
        return dict(layer_weights)
    return dict(zip(layers, layer_weights))


@dataclass
class LossBreakdown:
    adv: float
    local: float
    style: float
    percep: float
    total: float

    def as_row(self):
        return (self.adv, self.local, self.style, self.percep, self.total)


def combine_generator_loss(weights, adv, local=None, style=None, percep=None):
    """Scale and sum whichever terms are active; returns (Tensor, LossBreakdown).

    A term may be None only when its weight is zero, so skipped work is
    always explicit at the call site.
    """
    parts = (
        ("local", weights.lambda2, local),
        ("style", weights.lambda3, style),
        ("percep", weights.lambda4, percep),
    )
    if adv is None:
        raise ValidationError("the adversarial term is always required")
    total = ag.mul(adv, weights.lambda1)
    vals = {"adv": float(adv.data), "local": 0.0, "style": 0.0, "percep": 0.0}
    for name, lam, term in parts:
        if lam != 0.0:
            if term is None:
                raise ValidationError(f"{name} weight is {lam} but no term was given")
            total = ag.add(total, ag.mul(term, lam))
        if term is not None:
            vals[name] = float(term.data)
    return total, LossBreakdown(
        adv=vals["adv"],
        local=vals["local"],
        style=vals["style"],
        percep=vals["percep"],
        total=float(total.data),
    )
