"""Frozen VGG-19 feature extractor used by the style and texture terms.

Only the prefix up to conv5_1 exists here (13 convolutions, 4 max pools).
Weights load from an NPZ whose keys follow "conv3_2.weight" /
"conv3_2.bias" with torch-layout conv arrays (out, in, 3, 3). Point the
`extractor.weights_path` config field or the INPAINT_FORGE_VGG_WEIGHTS
environment variable at the file. `write_surrogate_weights` emits a
seeded stand-in with the same schema for offline runs; converting the
torchvision checkpoint gives the ImageNet-trained version (see README).
"""

import os

import numpy as np

from . import VGG_WEIGHTS_ENV
from . import autograd as ag
from .errors import DataError, ValidationError, WeightsNotFoundError

# (name, cin, cout); pools separate the blocks
CONV_PLAN = (
    ("conv1_1", 3, 64),
    ("conv1_2", 64, 64),
    ("conv2_1", 64, 128),
    ("conv2_2", 128, 128),
    ("conv3_1", 128, 256),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv3_4", 256, 256),
    ("conv4_1", 256, 512),
    ("conv4_2", 512, 512),
    ("conv4_3", 512, 512),
    ("conv4_4", 512, 512),
    ("conv5_1", 512, 512),
)
_POOL_BEFORE = {"conv2_1", "conv3_1", "conv4_1", "conv5_1"}
LAYER_NAMES = tuple(name for name, _, _ in CONV_PLAN)
DEFAULT_STYLE_LAYERS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")

_IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32).reshape(1, 3, 1, 1)
_IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32).reshape(1, 3, 1, 1)


def resolve_weights_path(explicit=None):
    """Config path wins; else the environment variable; else a hard error."""
    path = explicit or os.environ.get(VGG_WEIGHTS_ENV, "")
    if not path:
        raise WeightsNotFoundError(
            "no feature-extractor weights configured; set extractor.weights_path "
            f"or export {VGG_WEIGHTS_ENV}, or create a stand-in with "
            "`inpaint-forge make-extractor-weights`"
        )
    if not os.path.exists(path):
        raise WeightsNotFoundError(
            f"feature-extractor weights not found at {path}; create a stand-in "
            "with `inpaint-forge make-extractor-weights` or convert the "
            "torchvision vgg19 checkpoint (see README)"
        )
    return path


def load_weights(path):
    """Read and shape-check the conv kernels; extra NPZ keys are ignored."""
    try:
        with np.load(path, allow_pickle=False) as npz:
            raw = {k: npz[k] for k in npz.files}
    except OSError as exc:
        raise DataError(f"cannot read extractor weights {path}: {exc}")
    except ValueError as exc:
        raise DataError(f"malformed extractor weights {path}: {exc}")
    weights = {}
    for name, cin, cout in CONV_PLAN:
        wk, bk = f"{name}.weight", f"{name}.bias"
        if wk not in raw or bk not in raw:
            raise ValidationError(f"{path}: missing extractor arrays for {name}")
        w, b = raw[wk], raw[bk]
        if w.shape != (cout, cin, 3, 3) or b.shape != (cout,):
            raise ValidationError(
                f"{path}: {name} has shape {w.shape}/{b.shape}, expected "
                f"{(cout, cin, 3, 3)}/{(cout,)}"
            )
        weights[name] = (w.astype(np.float32), b.astype(np.float32))
    return weights


def write_surrogate_weights(path, seed=0):
    """Seeded He-initialized stand-in weights with the documented schema."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, cin, cout in CONV_PLAN:
        scale = np.sqrt(2.0 / (cin * 9))
        arrays[f"{name}.weight"] = rng.normal(0.0, scale, (cout, cin, 3, 3)).astype(
            np.float32
        )
        arrays[f"{name}.bias"] = np.zeros(cout, dtype=np.float32)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    np.savez(path, **arrays)


class FeatureExtractor:
    """Callable mapping model-range images to named post-ReLU activations."""

    def __init__(self, weights):
        self._w = {}
        for name, _, _ in CONV_PLAN:
            w, b = weights[name]
            self._w[name] = (ag.Tensor(w), ag.Tensor(b))

    @classmethod
    def from_path(cls, path=None):
        return cls(load_weights(resolve_weights_path(path)))

    def __call__(self, x, layers=DEFAULT_STYLE_LAYERS):
        """x: Tensor (n,1,h,w) in [-1,1]. Returns {layer: Tensor}.

        Runs only as deep as the last requested layer. Spatial dims must
        survive the pools on the way (divisible by 2 at each of them).
        """
        bad = [l for l in layers if l not in LAYER_NAMES]
        if bad:
            raise ValidationError(f"unknown extractor layers: {bad}")
        if len(set(layers)) != len(layers):
            raise ValidationError("duplicate extractor layers requested")
        wanted = set(layers)
        last = max(LAYER_NAMES.index(l) for l in layers)
        v = ag.mul(ag.add(x, 1.0), 0.5)
        v = ag.concat([v, v, v], axis=1)
        v = ag.mul(ag.sub(v, ag.Tensor(_IMAGENET_MEAN)), ag.Tensor(1.0 / _IMAGENET_STD))
        out = {}
        for i, (name, _, _) in enumerate(CONV_PLAN):
            if name in _POOL_BEFORE:
                v = ag.maxpool2x2(v)
            w, b = self._w[name]
            v = ag.relu(ag.conv2d(v, w, b, stride=1, padding=1))
            if name in wanted:
                out[name] = v
            if i == last:
                break
        return out
