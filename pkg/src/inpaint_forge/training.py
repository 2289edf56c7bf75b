"""Alternating adversarial training with derived per-epoch randomness.

Every random decision in a run is a pure function of (config seed,
epoch index): sample order and region placements come from seed
sequences spawned per epoch, never from live RNG state. Checkpoints
therefore store only the seed, and resuming mid-epoch replays the exact
batches the interrupted run would have seen, bitwise.

Update order inside one step: global discriminator, local
discriminator, then the generator. Both discriminators train every step
even when the local adversarial weight is zero; the weight only gates
the generator-side term.
"""

import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import imaging, losses, networks
from .errors import CheckpointError, NonFiniteLossError, ValidationError
from .features import FeatureExtractor
from .optim import Adam

CKPT_MAGIC = "inpaint-forge-ckpt-v1"
LOG_COLUMNS = (
    "step",
    "adv",
    "local",
    "style",
    "percep",
    "total",
    "d_global",
    "d_local",
    "wall_time",
)


# -- data ---------------------------------------------------------------------


def load_split(cfg, split):
    """Images of one manifest split as (names, (N,h,w) float32 array)."""
    manifest = imaging.read_manifest(os.path.join(cfg.data.dir, "manifest.txt"))
    names = manifest.paths(split)
    if not names:
        raise ValidationError(f"manifest has no {split!r} images")
    arrs = []
    for name in names:
        a = imaging.load_image(os.path.join(cfg.data.dir, name))
        arrs.append(imaging.fit_to_size(a, cfg.image_size))
    return names, np.stack(arrs)


# -- epoch plans ----------------------------------------------------------------


def epoch_plan(seed, epoch, n_train, image_size, region_size):
    """Deterministic (order, regions) for one epoch."""
    rng_o = np.random.default_rng(np.random.SeedSequence([seed, epoch, 11]))
    order = rng_o.permutation(n_train)
    rng_r = np.random.default_rng(np.random.SeedSequence([seed, epoch, 13]))
    regions = [
        imaging.sample_region(rng_r, image_size, image_size, region_size)
        for _ in range(n_train)
    ]
    return order, regions


def plan_batches(order, regions, batch_size):
    out = []
    for i in range(0, len(order), batch_size):
        out.append((order[i : i + batch_size], regions[i : i + batch_size]))
    return out


def steps_per_epoch(n_train, batch_size):
    return (n_train + batch_size - 1) // batch_size


# -- helpers ---------------------------------------------------------------------


@contextmanager
def frozen(*modules):
    """Temporarily drop requires_grad so conv backward skips weight grads."""
    saved = []
    for m in modules:
        for p in m.parameters():
            saved.append((p, p.requires_grad))
            p.requires_grad = False
    try:
        yield
    finally:
        for p, rg in saved:
            p.requires_grad = rg


@dataclass
class StepStats:
    step: int
    adv: float
    local: float
    style: float
    percep: float
    total: float
    d_global: float
    d_local: float


class TrainLog:
    """Append-only CSV, one row per logged step."""

    def __init__(self, path):
        self.path = path
        if not os.path.exists(path):
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(LOG_COLUMNS) + "\n")

    def write(self, stats, wall_time):
        row = (
            f"{stats.step},{stats.adv:.6g},{stats.local:.6g},{stats.style:.6g},"
            f"{stats.percep:.6g},{stats.total:.6g},{stats.d_global:.6g},"
            f"{stats.d_local:.6g},{wall_time:.3f}\n"
        )
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(row)


def _require_finite(value, label, step, indices, extra=None):
    if np.isfinite(value):
        return
    diag = {"step": step, "term": label, "value": float(value),
            "batch_indices": [int(i) for i in indices]}
    if extra:
        diag.update(extra)
    raise NonFiniteLossError(
        f"non-finite {label} loss ({value}) at step {step}; "
        f"batch indices {diag['batch_indices']}",
        diagnostics=diag,
    )


# -- trainer ------------------------------------------------------------------


class Trainer:
    def __init__(self, cfg, train_images, extractor=None):
        self.cfg = cfg
        self.images = np.ascontiguousarray(train_images, dtype=np.float32)
        lw = cfg.loss_weights
        if lw.lambda3 != 0.0 and extractor is None:
            raise ValidationError("style weight is non-zero but no extractor given")
        self.extractor = extractor
        self.gen = networks.build_casnet(
            cfg.generator, cfg.seed, cfg.append_mask_channel
        )
        self.d_global = networks.build_global_discriminator(
            cfg.seed, cfg.global_discriminator.to_spec(conditioned=True)
        )
        self.d_local = networks.build_local_discriminator(
            cfg.seed, cfg.local_discriminator.to_spec(conditioned=False)
        )
        t = cfg.train
        self.opt_g = Adam(self.gen.parameters(), t.learning_rate, t.beta1, t.beta2)
        self.opt_dg = Adam(self.d_global.parameters(), t.learning_rate, t.beta1, t.beta2)
        self.opt_dl = Adam(self.d_local.parameters(), t.learning_rate, t.beta1, t.beta2)
        self.completed_steps = 0
        self._gram_cache = {}  # image index -> {layer: (c,c) float32}
        self._style_weights = None
        if lw.style_layer_weights is not None:
            self._style_weights = dict(
                zip(cfg.extractor.style_layers, lw.style_layer_weights)
            )
        self._percep_weights = (
            list(lw.percep_layer_weights)
            if lw.percep_layer_weights is not None
            else None
        )

    # -- batch assembly ------------------------------------------------------
    def _batch_tensors(self, indices, regions):
        truth = imaging.to_model_range(self.images[indices])[:, None]
        ctx = truth.copy()
        for i, r in enumerate(regions):
            ctx[i, :, r.top : r.top + r.size, r.left : r.left + r.size] = (
                self.cfg.fill_value
            )
        mask = None
        if self.cfg.append_mask_channel:
            size = self.cfg.image_size
            m = np.stack(
                [imaging.region_mask(size, size, r) for r in regions]
            )[:, None]
            mask = ag.Tensor(m)
        return ag.Tensor(truth), ag.Tensor(ctx), mask

    def _target_grams(self, indices, truth_t):
        """Per-image target Grams, cached when the config allows."""
        layers = list(self.cfg.extractor.style_layers)
        cache_on = self.cfg.train.cache_style_targets
        missing = [
            j for j, idx in enumerate(indices) if int(idx) not in self._gram_cache
        ]
        if not cache_on or missing:
            with ag.no_grad():
                feats = self.extractor(truth_t, layers)
                grams = {name: ag.gram(feats[name]).data for name in layers}
            if not cache_on:
                return grams
            for j in missing:
                self._gram_cache[int(indices[j])] = {
                    name: grams[name][j] for name in layers
                }
        return {
            name: np.stack([self._gram_cache[int(i)][name] for i in indices])
            for name in layers
        }

    # -- one optimization step --------------------------------------------------
    def step(self, indices, regions):
        cfg = self.cfg
        lw = cfg.loss_weights
        step_no = self.completed_steps + 1
        truth_t, ctx_t, mask_t = self._batch_tensors(indices, regions)

        x_gen = self.gen(ctx_t, mask_t)
        if cfg.compose_for_discriminator:
            xhat = ag.compose_regions(ctx_t, x_gen, regions)
        else:
            xhat = x_gen
        xhat_const = xhat.detach()

        # 1) global discriminator
        self.opt_dg.zero_grad()
        real_s, _ = self.d_global(truth_t, ctx_t)
        fake_s, _ = self.d_global(xhat_const, ctx_t)
        d_loss = losses.adversarial_d_loss(real_s, fake_s)
        _require_finite(float(d_loss.data), "d_global", step_no, indices)
        d_loss.backward()
        self.opt_dg.step()

        # 2) local discriminator, active regardless of lambda2
        real_l = ag.extract_regions(truth_t, regions)
        fake_l = ag.extract_regions(xhat_const, regions)
        self.opt_dl.zero_grad()
        real_ls, _ = self.d_local(real_l.detach())
        fake_ls, _ = self.d_local(fake_l.detach())
        dl_loss = losses.adversarial_d_loss(real_ls, fake_ls)
        _require_finite(float(dl_loss.data), "d_local", step_no, indices)
        dl_loss.backward()
        self.opt_dl.step()

        # 3) generator
        self.opt_g.zero_grad()
        with frozen(self.d_global, self.d_local):
            fake_sg, fake_stack = self.d_global(xhat, ctx_t)
            adv = losses.adversarial_g_loss(fake_sg)
            local = None
            if lw.lambda2 != 0.0:
                local_sg, _ = self.d_local(ag.extract_regions(xhat, regions))
                local = losses.adversarial_g_loss(local_sg)
            style = None
            if lw.lambda3 != 0.0:
                hat_feats = self.extractor(xhat, list(cfg.extractor.style_layers))
                targets = self._target_grams(indices, truth_t)
                style = losses.style_loss(
                    hat_feats,
                    targets,
                    layer_weights=self._style_weights,
                    gram_mode=cfg.extractor.gram_depth_mode,
                )
            percep = None
            if lw.lambda4 != 0.0:
                with ag.no_grad():
                    _, real_stack = self.d_global(truth_t, ctx_t)
                percep = losses.perceptual_loss(
                    fake_stack, real_stack, self._percep_weights
                )
            weights = losses.LossWeights(lw.lambda1, lw.lambda2, lw.lambda3, lw.lambda4)
            total, breakdown = losses.combine_generator_loss(
                weights, adv, local, style, percep
            )
        _require_finite(
            breakdown.total, "generator", step_no, indices,
            extra={"adv": breakdown.adv, "local": breakdown.local,
                   "style": breakdown.style, "percep": breakdown.percep},
        )
        total.backward()
        self.opt_g.step()

        self.completed_steps = step_no
        return StepStats(
            step=step_no,
            adv=breakdown.adv,
            local=breakdown.local,
            style=breakdown.style,
            percep=breakdown.percep,
            total=breakdown.total,
            d_global=float(d_loss.data),
            d_local=float(dl_loss.data),
        )

    # -- state -------------------------------------------------------------------
    def state_arrays(self):
        out = {}
        for prefix, mod in (("gen", self.gen), ("dg", self.d_global), ("dl", self.d_local)):
            for k, v in mod.state_dict().items():
                out[f"{prefix}/{k}"] = v
        for prefix, opt in (("optg", self.opt_g), ("optdg", self.opt_dg), ("optdl", self.opt_dl)):
            for k, v in opt.state_arrays().items():
                out[f"{prefix}/{k}"] = v
        return out

    def load_state_arrays(self, arrays):
        def sub(prefix):
            pl = prefix + "/"
            return {k[len(pl):]: v for k, v in arrays.items() if k.startswith(pl)}

        self.gen.load_state_dict(sub("gen"))
        self.d_global.load_state_dict(sub("dg"))
        self.d_local.load_state_dict(sub("dl"))
        self.opt_g.load_state_arrays(sub("optg"))
        self.opt_dg.load_state_arrays(sub("optdg"))
        self.opt_dl.load_state_arrays(sub("optdl"))


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path, trainer, epoch):
    cfg = trainer.cfg
    header = {
        "magic": CKPT_MAGIC,
        "config_hash": cfg.canonical_hash(),
        "config": cfg.to_dict(),
        "epoch": int(epoch),
        "step": int(trainer.completed_steps),
        "rng": {"scheme": "derived", "seed": int(cfg.seed)},
    }
    blob = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, __header__=blob, **trainer.state_arrays())
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    """Returns (header dict, {name: array}); corrupt files raise CheckpointError."""
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as npz:
            if "__header__" not in npz.files:
                raise CheckpointError(f"{path}: not a checkpoint (no header)")
            try:
                header = json.loads(bytes(npz["__header__"]).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CheckpointError(f"{path}: corrupt checkpoint header: {exc}")
            arrays = {k: npz[k] for k in npz.files if k != "__header__"}
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint: {exc}")
    if header.get("magic") != CKPT_MAGIC:
        raise CheckpointError(f"{path}: unrecognized checkpoint magic")
    for key in ("config_hash", "config", "epoch", "step", "rng"):
        if key not in header:
            raise CheckpointError(f"{path}: checkpoint header missing {key!r}")
    return header, arrays


# -- the loop ----------------------------------------------------------------------


def run_training(cfg, resume_from=None, force=False, progress=None, extractor=None):
    """Train per config; returns a summary dict with the final checkpoint path.

    `resume_from` continues an earlier run; its config hash must match
    unless `force` is set. `progress` is an optional callable fed one
    line per logged step.
    """
    names, images = load_split(cfg, "train")
    if extractor is None and cfg.loss_weights.lambda3 != 0.0:
        extractor = FeatureExtractor.from_path(cfg.extractor.weights_path)
    trainer = Trainer(cfg, images, extractor)

    start_step = 0
    if resume_from is not None:
        header, arrays = load_checkpoint(resume_from)
        if header["config_hash"] != cfg.canonical_hash() and not force:
            raise ValidationError(
                "checkpoint config hash does not match this config; "
                "pass force to resume anyway"
            )
        trainer.load_state_arrays(arrays)
        start_step = int(header["step"])
        trainer.completed_steps = start_step

    os.makedirs(cfg.out_dir, exist_ok=True)
    log = TrainLog(os.path.join(cfg.out_dir, "log.csv"))
    n_train = images.shape[0]
    spe = steps_per_epoch(n_train, cfg.train.batch_size)
    total_steps = spe * cfg.train.epochs
    t0 = time.monotonic()
    ckpt_path = None

    step = start_step
    for epoch in range(start_step // spe, cfg.train.epochs):
        order, regions = epoch_plan(
            cfg.seed, epoch, n_train, cfg.image_size, cfg.region_size
        )
        batches = plan_batches(order, regions, cfg.train.batch_size)
        skip = step - epoch * spe  # mid-epoch resume lands here
        for indices, regs in batches[skip:]:
            stats = trainer.step(indices, regs)
            step = stats.step
            if step % cfg.train.log_every == 0 or step == total_steps:
                log.write(stats, time.monotonic() - t0)
                if progress is not None:
                    progress(
                        f"epoch {epoch + 1}/{cfg.train.epochs} step {step}/{total_steps} "
                        f"total {stats.total:.4f} d {stats.d_global:.4f}/{stats.d_local:.4f}"
                    )
            if (
                cfg.train.checkpoint_every > 0
                and step % cfg.train.checkpoint_every == 0
            ):
                ckpt_path = save_checkpoint(
                    os.path.join(cfg.out_dir, f"ckpt_{step}.bin"), trainer, epoch
                )
    ckpt_path = save_checkpoint(
        os.path.join(cfg.out_dir, f"ckpt_{step}.bin"), trainer, cfg.train.epochs - 1
    )
    return {
        "steps": step,
        "final_checkpoint": ckpt_path,
        "log_path": log.path,
        "train_images": n_train,
    }
