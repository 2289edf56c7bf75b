"""Inference and evaluation: repairs, baselines, metric reports.

Evaluation regions are re-derived from the config seed, so reruns score
the same hidden squares. Every model is scored on the full repaired
image and on the repaired region alone; the text report flags the best
value per column within each scope with '*'.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import imaging, metrics, networks
from .config import RunConfig
from .errors import ValidationError
from .training import load_checkpoint, load_split

REPORT_COLUMNS = ("model", "scope", "ssim", "psnr_db", "mse", "uqi", "n")
SCOPES = ("full", "region")


@dataclass
class MetricReport:
    model: str
    scope: str
    ssim: float
    psnr_db: float
    mse: float
    uqi: float
    n: int


def load_generator(checkpoint_path):
    """Rebuild the generator recorded in a checkpoint. Returns (config, net)."""
    header, arrays = load_checkpoint(checkpoint_path)
    cfg = RunConfig.from_dict(header["config"])
    gen = networks.build_casnet(cfg.generator, cfg.seed, cfg.append_mask_channel)
    gen.load_state_dict(
        {k[len("gen/") :]: v for k, v in arrays.items() if k.startswith("gen/")}
    )
    gen.eval()
    return cfg, gen


def inpaint_image(gen, truth_storage, region, cfg):
    """Mask, repair, compose; storage-range in and out."""
    return inpaint_batch(gen, truth_storage[None], [region], cfg)[0]


def inpaint_batch(gen, images_storage, regions, cfg, batch_size=4):
    if len(images_storage) != len(regions):
        raise ValidationError("one region per image required")
    gen.eval()
    out = np.empty_like(images_storage, dtype=np.float32)
    size = images_storage.shape[1]
    for i in range(0, len(images_storage), batch_size):
        chunk = images_storage[i : i + batch_size]
        regs = regions[i : i + batch_size]
        truth = imaging.to_model_range(chunk)[:, None]
        ctx = truth.copy()
        for j, r in enumerate(regs):
            r.validate(size, size)
            ctx[j, :, r.top : r.top + r.size, r.left : r.left + r.size] = (
                cfg.fill_value
            )
        mask = None
        if cfg.append_mask_channel:
            mask = ag.Tensor(
                np.stack([imaging.region_mask(size, size, r) for r in regs])[:, None]
            )
        with ag.no_grad():
            x = gen(ag.Tensor(ctx), mask)
            composed = ag.compose_regions(ag.Tensor(ctx), x, regs)
        out[i : i + batch_size] = imaging.from_model_range(composed.data[:, 0])
    return out


def mean_fill_baseline(truth_storage, region):
    """Fill the region with the mean of the surviving context pixels."""
    region.validate(*truth_storage.shape)
    m = imaging.region_mask(*truth_storage.shape, region).astype(bool)
    fill = float(truth_storage[~m].mean())
    return imaging.compose(
        truth_storage, np.full((region.size, region.size), fill, np.float32), region
    )


def eval_regions(cfg, count):
    """The deterministic hidden squares scored by every evaluation run."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 991]))
    return [
        imaging.sample_region(rng, cfg.image_size, cfg.image_size, cfg.region_size)
        for _ in range(count)
    ]


def evaluate(cfg, generators, split="val", include_baselines=True, grids_dir=None):
    """Score named generators (and baselines) over a split.

    `generators` maps model name -> CasNet. Returns (reports, samples)
    where samples are per-image dict rows and reports are aggregated
    MetricReport entries, one per (model, scope).
    """
    names, images = load_split(cfg, split)
    regions = eval_regions(cfg, len(names))
    predictions = {}
    for model_name, gen in generators.items():
        predictions[model_name] = inpaint_batch(gen, images, regions, cfg)
    if include_baselines:
        predictions["mean_fill"] = np.stack(
            [mean_fill_baseline(im, r) for im, r in zip(images, regions)]
        )
        untrained = networks.build_casnet(
            cfg.generator, cfg.seed, cfg.append_mask_channel
        )
        predictions["untrained"] = inpaint_batch(untrained, images, regions, cfg)

    samples = []
    for model_name, preds in predictions.items():
        for img_name, truth, pred, region in zip(names, images, preds, regions):
            for scope in SCOPES:
                if scope == "region":
                    a = imaging.extract_region(pred, region)
                    b = imaging.extract_region(truth, region)
                else:
                    a, b = pred, truth
                row = {"model": model_name, "scope": scope, "image": img_name}
                row.update(metrics.all_metrics(a, b))
                samples.append(row)

    reports = []
    for model_name in predictions:
        for scope in SCOPES:
            rows = [
                s for s in samples if s["model"] == model_name and s["scope"] == scope
            ]
            reports.append(
                MetricReport(
                    model=model_name,
                    scope=scope,
                    ssim=float(np.mean([r["ssim"] for r in rows])),
                    psnr_db=float(np.mean([r["psnr_db"] for r in rows])),
                    mse=float(np.mean([r["mse"] for r in rows])),
                    uqi=float(np.mean([r["uqi"] for r in rows])),
                    n=len(rows),
                )
            )

    if grids_dir is not None:
        os.makedirs(grids_dir, exist_ok=True)
        for i, (img_name, truth, region) in enumerate(zip(names, images, regions)):
            panels = [truth, imaging.mask_image(truth, region, 0.5)]
            panels += [predictions[m][i] for m in predictions]
            save_comparison_grid(
                panels, os.path.join(grids_dir, f"grid_{os.path.splitext(img_name)[0]}.png")
            )
    return reports, samples


def save_comparison_grid(panels, path, gap=2):
    """Horizontal strip of same-sized grayscale panels, 8-bit output."""
    h = panels[0].shape[0]
    sep = np.ones((h, gap), dtype=np.float32)
    cells = []
    for p in panels:
        if p.shape != panels[0].shape:
            raise ValidationError("grid panels must share a shape")
        cells += [p.astype(np.float32), sep]
    imaging.save_image(np.concatenate(cells[:-1], axis=1), path, bit_depth=8)


# -- report serialization --------------------------------------------------------


def write_report_csv(reports, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in reports:
            fh.write(
                f"{r.model},{r.scope},{r.ssim:.6f},{r.psnr_db:.4f},"
                f"{r.mse:.4f},{r.uqi:.6f},{r.n}\n"
            )


def write_samples_csv(samples, path):
    cols = ("model", "scope", "image", "ssim", "psnr_db", "mse", "uqi")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for s in samples:
            fh.write(
                f"{s['model']},{s['scope']},{s['image']},{s['ssim']:.6f},"
                f"{s['psnr_db']:.4f},{s['mse']:.4f},{s['uqi']:.6f}\n"
            )


def render_report_text(reports):
    """Aligned table per scope; best value per column starred."""
    lines = []
    fmt = {"ssim": "{:.4f}", "psnr_db": "{:.2f}", "mse": "{:.2f}", "uqi": "{:.4f}"}
    for scope in SCOPES:
        rows = [r for r in reports if r.scope == scope]
        if not rows:
            continue
        best = {}
        for m in metrics.METRIC_NAMES:
            vals = [getattr(r, m) for r in rows]
            best[m] = max(vals) if metrics.HIGHER_IS_BETTER[m] else min(vals)
        lines.append(f"scope={scope} (n={rows[0].n})")
        header = f"{'model':<16}{'SSIM':>10}{'PSNR(dB)':>12}{'MSE':>12}{'UQI':>10}"
        lines.append(header)
        for r in rows:
            cells = []
            for m, width in zip(metrics.METRIC_NAMES, (10, 12, 12, 10)):
                txt = fmt[m].format(getattr(r, m))
                if getattr(r, m) == best[m]:
                    txt += "*"
                cells.append(f"{txt:>{width}}")
            lines.append(f"{r.model:<16}" + "".join(cells))
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def write_outputs(reports, samples, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_report_csv(reports, os.path.join(out_dir, "eval_report.csv"))
    write_samples_csv(samples, os.path.join(out_dir, "eval_samples.csv"))
    text = render_report_text(reports)
    with open(os.path.join(out_dir, "eval_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return text
