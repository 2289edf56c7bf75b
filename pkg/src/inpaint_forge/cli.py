"""Command-line entry points.

Exit codes: 0 success, 2 validation/config problems, 3 missing or
unreadable files, 4 a non-finite training loss.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, imaging
from .config import RunConfig
from .errors import (
    DataError,
    NonFiniteLossError,
    ValidationError,
)
from .features import write_surrogate_weights


def _cmd_make_dataset(args):
    names = imaging.write_phantom_dataset(args.out, args.count, args.size, args.seed)
    manifest = imaging.build_manifest(names, args.seed, args.val_fraction)
    imaging.write_manifest(manifest, os.path.join(args.out, "manifest.txt"))
    n_val = len(manifest.paths("val"))
    print(
        f"wrote {len(names)} phantoms ({args.size}x{args.size}) to {args.out}; "
        f"{len(names) - n_val} train / {n_val} val"
    )
    return 0


def _cmd_train(args):
    from .training import run_training

    cfg = RunConfig.from_json(args.config)
    summary = run_training(
        cfg, resume_from=args.resume, force=args.force, progress=print
    )
    print(
        f"finished {summary['steps']} steps over {summary['train_images']} images; "
        f"checkpoint: {summary['final_checkpoint']}"
    )
    return 0


def _cmd_inpaint(args):
    from .evaluation import inpaint_image, load_generator

    cfg, gen = load_generator(args.checkpoint)
    truth = imaging.fit_to_size(imaging.load_image(args.image), cfg.image_size)
    if args.top is not None or args.left is not None:
        if args.top is None or args.left is None:
            raise ValidationError("--top and --left must be given together")
        size = args.size if args.size is not None else cfg.region_size
        region = imaging.RegionSpec(args.top, args.left, size)
        region.validate(cfg.image_size, cfg.image_size)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 991]))
        region = imaging.sample_region(
            rng, cfg.image_size, cfg.image_size, cfg.region_size
        )
    out = inpaint_image(gen, truth, region, cfg)
    imaging.save_image(out, args.out)
    print(
        f"repaired {args.image} region top={region.top} left={region.left} "
        f"size={region.size} -> {args.out}"
    )
    return 0


def _parse_checkpoint_names(tokens):
    pairs = []
    seen = set()
    for tok in tokens:
        if "=" in tok:
            name, path = tok.split("=", 1)
        else:
            name, path = os.path.splitext(os.path.basename(tok))[0], tok
        if not name or not path:
            raise ValidationError(f"bad checkpoint argument {tok!r}")
        if name in seen:
            raise ValidationError(f"duplicate model name {name!r}")
        seen.add(name)
        pairs.append((name, path))
    return pairs


def _cmd_evaluate(args):
    from .evaluation import evaluate, load_generator, write_outputs

    cfg = RunConfig.from_json(args.config)
    generators = {}
    for name, path in _parse_checkpoint_names(args.checkpoint):
        _, gen = load_generator(path)
        generators[name] = gen
    out_dir = args.out or os.path.join(cfg.out_dir, "eval")
    reports, samples = evaluate(
        cfg,
        generators,
        split=args.split,
        include_baselines=not args.no_baselines,
        grids_dir=os.path.join(out_dir, "grids") if args.grids else None,
    )
    text = write_outputs(reports, samples, out_dir)
    print(text, end="")
    print(f"reports written to {out_dir}")
    return 0


def _cmd_make_extractor_weights(args):
    write_surrogate_weights(args.out, seed=args.seed)
    print(f"surrogate extractor weights written to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="inpaint-forge",
        description="Adversarial inpainting of square-masked grayscale images.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("make-dataset", help="generate a phantom dataset + manifest")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--count", type=int, default=200)
    d.add_argument("--size", type=int, default=256)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--val-fraction", type=float, default=0.1)
    d.set_defaults(func=_cmd_make_dataset)

    t = sub.add_parser("train", help="train from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument(
        "--force", action="store_true", help="resume despite a config hash mismatch"
    )
    t.set_defaults(func=_cmd_train)

    i = sub.add_parser("inpaint", help="repair one image with a trained model")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--top", type=int, default=None)
    i.add_argument("--left", type=int, default=None)
    i.add_argument("--size", type=int, default=None)
    i.add_argument("--seed", type=int, default=0, help="seed for a random region")
    i.set_defaults(func=_cmd_inpaint)

    e = sub.add_parser("evaluate", help="score checkpoints against baselines")
    e.add_argument("--config", required=True)
    e.add_argument(
        "--checkpoint",
        action="append",
        required=True,
        help="checkpoint path, or name=path; repeatable",
    )
    e.add_argument("--split", choices=("train", "val"), default="val")
    e.add_argument("--out", default=None, help="report directory")
    e.add_argument("--grids", action="store_true", help="also write comparison PNGs")
    e.add_argument("--no-baselines", action="store_true")
    e.set_defaults(func=_cmd_evaluate)

    w = sub.add_parser(
        "make-extractor-weights",
        help="write seeded surrogate feature-extractor weights",
    )
    w.add_argument("--out", required=True)
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(func=_cmd_make_extractor_weights)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, indent=2), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
