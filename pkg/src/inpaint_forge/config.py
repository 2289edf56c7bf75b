"""Run configuration: strict JSON in, dataclasses out.

Unknown keys anywhere in the document are hard errors, as are wrong
types; a typo must never silently fall back to a default. `fill_value`
is expressed in model range [-1, 1]. Discriminator ladders fix the
kernel at 4 and take per-layer widths/strides; the declared patch_size
is cross-checked against the receptive field implied by the ladder.
"""

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError, DataError, ValidationError
from .features import DEFAULT_STYLE_LAYERS, LAYER_NAMES
from .networks import (
    GLOBAL_LAYERS,
    GLOBAL_PATCH,
    LOCAL_LAYERS,
    LOCAL_PATCH,
    DiscriminatorSpec,
    GeneratorSpec,
)

_REQUIRED = object()


class _Reader:
    def __init__(self, d, path):
        if not isinstance(d, dict):
            raise ConfigError(f"{path or 'config'}: expected a JSON object")
        self.d = dict(d)
        self.path = path

    def _key(self, key):
        return f"{self.path}.{key}" if self.path else key

    def take(self, key, typ, default=_REQUIRED, allow_none=False):
        if key not in self.d:
            if default is _REQUIRED:
                raise ConfigError(f"missing required config key {self._key(key)}")
            return default
        v = self.d.pop(key)
        if v is None:
            if allow_none:
                return None
            raise ConfigError(f"{self._key(key)} must not be null")
        if typ is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if typ is not bool and isinstance(v, bool):
            raise ConfigError(f"{self._key(key)} has the wrong type (bool)")
        if not isinstance(v, typ):
            raise ConfigError(
                f"{self._key(key)} must be {typ.__name__}, got {type(v).__name__}"
            )
        return v

    def section(self, key):
        return self.d.pop(key, {})

    def finish(self):
        if self.d:
            raise ConfigError(
                f"unknown config keys: {sorted(self._key(k) for k in self.d)}"
            )


def _num_list(reader, key, default, item_type=float, allow_none=False):
    v = reader.take(key, list, default=default, allow_none=allow_none)
    if v is None:
        return None
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{reader._key(key)}[{i}] must be a number")
        out.append(item_type(x))
    return out


@dataclass(frozen=True)
class DataConfig:
    dir: str = ""
    val_fraction: float = 0.1


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple
    strides: tuple
    patch_size: int

    def to_spec(self, conditioned):
        layers = tuple((4, s, c) for s, c in zip(self.strides, self.channels))
        return DiscriminatorSpec(layers, self.patch_size, conditioned)


@dataclass(frozen=True)
class LossWeightConfig:
    lambda1: float = 0.8
    lambda2: float = 0.2
    lambda3: float = 1e-4
    lambda4: float = 1e-4
    style_layer_weights: tuple = None
    percep_layer_weights: tuple = None


@dataclass(frozen=True)
class ExtractorConfig:
    weights_path: str = None
    style_layers: tuple = DEFAULT_STYLE_LAYERS
    gram_depth_mode: str = "volume"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 4
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    log_every: int = 10
    checkpoint_every: int = 0
    cache_style_targets: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    image_size: int = 256
    region_size: int = 64
    fill_value: float = 0.0
    append_mask_channel: bool = False
    compose_for_discriminator: bool = True
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    global_discriminator: DiscriminatorConfig = None
    local_discriminator: DiscriminatorConfig = None
    loss_weights: LossWeightConfig = field(default_factory=LossWeightConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.global_discriminator is None:
            object.__setattr__(
                self,
                "global_discriminator",
                _disc_config_from_layers(GLOBAL_LAYERS, GLOBAL_PATCH),
            )
        if self.local_discriminator is None:
            object.__setattr__(
                self,
                "local_discriminator",
                _disc_config_from_layers(LOCAL_LAYERS, LOCAL_PATCH),
            )
        self.validate()

    # -- validation ------------------------------------------------------
    def validate(self):
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.image_size < 1 or self.region_size < 1:
            raise ConfigError("image_size and region_size must be positive")
        if self.region_size > self.image_size:
            raise ConfigError(
                f"region_size {self.region_size} exceeds image_size {self.image_size}"
            )
        if not -1.0 <= self.fill_value <= 1.0:
            raise ConfigError("fill_value is model-range and must lie in [-1, 1]")
        if not 0.0 <= self.data.val_fraction < 1.0:
            raise ConfigError("data.val_fraction must be in [0, 1)")
        try:
            self.generator.validate_image_size(self.image_size)
        except ValidationError as exc:
            raise ConfigError(str(exc))
        for lam in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self.loss_weights, lam) < 0:
                raise ConfigError(f"loss_weights.{lam} must be non-negative")
        bad = [l for l in self.extractor.style_layers if l not in LAYER_NAMES]
        if bad:
            raise ConfigError(f"extractor.style_layers unknown: {bad}")
        if len(set(self.extractor.style_layers)) != len(self.extractor.style_layers):
            raise ConfigError("extractor.style_layers contains duplicates")
        if self.extractor.gram_depth_mode not in ("volume", "channels"):
            raise ConfigError("extractor.gram_depth_mode must be volume or channels")
        slw = self.loss_weights.style_layer_weights
        if slw is not None and len(slw) != len(self.extractor.style_layers):
            raise ConfigError(
                "loss_weights.style_layer_weights length must match "
                "extractor.style_layers"
            )
        plw = self.loss_weights.percep_layer_weights
        if plw is not None and len(plw) != len(self.global_discriminator.channels) + 1:
            raise ConfigError(
                "loss_weights.percep_layer_weights needs one entry per "
                "discriminator stage plus the raw input"
            )
        t = self.train
        if t.epochs < 1 or t.batch_size < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if t.learning_rate <= 0:
            raise ConfigError("train.learning_rate must be positive")
        if not (0 <= t.beta1 < 1 and 0 <= t.beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if t.log_every < 1 or t.checkpoint_every < 0:
            raise ConfigError("train.log_every >= 1, train.checkpoint_every >= 0")
        # both ladders must see their whole patch inside the image/region
        if self.global_discriminator.patch_size > self.image_size:
            raise ConfigError("global patch exceeds the image")
        if self.local_discriminator.patch_size > self.region_size:
            raise ConfigError("local patch exceeds the region")

    # -- serialization -----------------------------------------------------
    def to_dict(self):
        lw = self.loss_weights
        return {
            "seed": self.seed,
            "image_size": self.image_size,
            "region_size": self.region_size,
            "fill_value": self.fill_value,
            "append_mask_channel": self.append_mask_channel,
            "compose_for_discriminator": self.compose_for_discriminator,
            "out_dir": self.out_dir,
            "data": {"dir": self.data.dir, "val_fraction": self.data.val_fraction},
            "generator": {
                "num_unets": self.generator.num_unets,
                "base_channels": self.generator.base_channels,
                "depth": self.generator.depth,
                "max_channels": self.generator.max_channels,
            },
            "global_discriminator": _disc_dict(self.global_discriminator),
            "local_discriminator": _disc_dict(self.local_discriminator),
            "loss_weights": {
                "lambda1": lw.lambda1,
                "lambda2": lw.lambda2,
                "lambda3": lw.lambda3,
                "lambda4": lw.lambda4,
                "style_layer_weights": None
                if lw.style_layer_weights is None
                else list(lw.style_layer_weights),
                "percep_layer_weights": None
                if lw.percep_layer_weights is None
                else list(lw.percep_layer_weights),
            },
            "extractor": {
                "weights_path": self.extractor.weights_path,
                "style_layers": list(self.extractor.style_layers),
                "gram_depth_mode": self.extractor.gram_depth_mode,
            },
            "train": {
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "learning_rate": self.train.learning_rate,
                "beta1": self.train.beta1,
                "beta2": self.train.beta2,
                "log_every": self.train.log_every,
                "checkpoint_every": self.train.checkpoint_every,
                "cache_style_targets": self.train.cache_style_targets,
            },
        }

    def canonical_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- parsing ------------------------------------------------------------
    @classmethod
    def from_dict(cls, d):
        r = _Reader(d, "")
        kw = {
            "seed": r.take("seed", int, default=0),
            "image_size": r.take("image_size", int, default=256),
            "region_size": r.take("region_size", int, default=64),
            "fill_value": r.take("fill_value", float, default=0.0),
            "append_mask_channel": r.take("append_mask_channel", bool, default=False),
            "compose_for_discriminator": r.take(
                "compose_for_discriminator", bool, default=True
            ),
            "out_dir": r.take("out_dir", str, default="runs/default"),
        }
        dr = _Reader(r.section("data"), "data")
        kw["data"] = DataConfig(
            dir=dr.take("dir", str, default=""),
            val_fraction=dr.take("val_fraction", float, default=0.1),
        )
        dr.finish()

        gr = _Reader(r.section("generator"), "generator")
        try:
            kw["generator"] = GeneratorSpec(
                num_unets=gr.take("num_unets", int, default=3),
                base_channels=gr.take("base_channels", int, default=32),
                depth=gr.take("depth", int, default=6),
                max_channels=gr.take("max_channels", int, default=256),
            )
        except ValidationError as exc:
            raise ConfigError(f"generator: {exc}")
        gr.finish()

        kw["global_discriminator"] = _parse_disc(
            r.section("global_discriminator"),
            "global_discriminator",
            GLOBAL_LAYERS,
            GLOBAL_PATCH,
        )
        kw["local_discriminator"] = _parse_disc(
            r.section("local_discriminator"),
            "local_discriminator",
            LOCAL_LAYERS,
            LOCAL_PATCH,
        )

        lr_ = _Reader(r.section("loss_weights"), "loss_weights")
        slw = _num_list(lr_, "style_layer_weights", default=None, allow_none=True)
        plw = _num_list(lr_, "percep_layer_weights", default=None, allow_none=True)
        kw["loss_weights"] = LossWeightConfig(
            lambda1=lr_.take("lambda1", float, default=0.8),
            lambda2=lr_.take("lambda2", float, default=0.2),
            lambda3=lr_.take("lambda3", float, default=1e-4),
            lambda4=lr_.take("lambda4", float, default=1e-4),
            style_layer_weights=None if slw is None else tuple(slw),
            percep_layer_weights=None if plw is None else tuple(plw),
        )
        lr_.finish()

        er = _Reader(r.section("extractor"), "extractor")
        layers = er.take("style_layers", list, default=None, allow_none=True)
        if layers is not None:
            for x in layers:
                if not isinstance(x, str):
                    raise ConfigError("extractor.style_layers must be strings")
        kw["extractor"] = ExtractorConfig(
            weights_path=er.take("weights_path", str, default=None, allow_none=True),
            style_layers=DEFAULT_STYLE_LAYERS if layers is None else tuple(layers),
            gram_depth_mode=er.take("gram_depth_mode", str, default="volume"),
        )
        er.finish()

        tr = _Reader(r.section("train"), "train")
        kw["train"] = TrainConfig(
            epochs=tr.take("epochs", int, default=200),
            batch_size=tr.take("batch_size", int, default=4),
            learning_rate=tr.take("learning_rate", float, default=2e-4),
            beta1=tr.take("beta1", float, default=0.5),
            beta2=tr.take("beta2", float, default=0.999),
            log_every=tr.take("log_every", int, default=10),
            checkpoint_every=tr.take("checkpoint_every", int, default=0),
            cache_style_targets=tr.take("cache_style_targets", bool, default=True),
        )
        tr.finish()
        r.finish()
        return cls(**kw)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise DataError(f"config not found: {path}")
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}")
        return cls.from_dict(doc)


def _disc_dict(dc):
    return {
        "channels": list(dc.channels),
        "strides": list(dc.strides),
        "patch_size": dc.patch_size,
    }


def _disc_config_from_layers(layers, patch):
    return DiscriminatorConfig(
        channels=tuple(c for _, _, c in layers),
        strides=tuple(s for _, s, _ in layers),
        patch_size=patch,
    )


def _parse_disc(d, path, default_layers, default_patch):
    r = _Reader(d, path)
    channels = _num_list(
        r, "channels", default=[c for _, _, c in default_layers], item_type=int
    )
    strides = _num_list(
        r, "strides", default=[s for _, s, _ in default_layers], item_type=int
    )
    patch = r.take("patch_size", int, default=default_patch)
    r.finish()
    if len(channels) != len(strides):
        raise ConfigError(f"{path}: channels and strides lengths differ")
    if not channels:
        raise ConfigError(f"{path}: needs at least one conv layer")
    cfg = DiscriminatorConfig(tuple(channels), tuple(strides), patch)
    try:
        cfg.to_spec(conditioned=True)  # receptive-field cross-check
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}")
    return cfg
