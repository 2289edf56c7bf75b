#!/usr/bin/env python3
"""Compare the numba-jitted kernels against the pure-numpy fallback.

Times the three hot kernels on training-shaped inputs, then a full
training step (generator + both discriminators, losses, Adam), under
both settings of INPAINT_FORGE_BACKEND, and prints per-call wall times
with the numpy/numba ratio. Also cross-checks that the two backends
agree numerically on the kernel outputs.

Run from the repo root:

    python3 benchmarks/bench_backends.py [--repeats N] [--steps N]
"""

import argparse
import os
import tempfile
import time

import numpy as np

from inpaint_forge import BACKEND_ENV, backend, imaging
from inpaint_forge import training as T
from inpaint_forge.config import RunConfig
from inpaint_forge.features import FeatureExtractor, write_surrogate_weights


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases():
    """(label, callable-factory) pairs on training-shaped inputs."""
    rng = np.random.default_rng(0)
    # conv path runs float32, the metric windows run float64
    xp = rng.normal(size=(4, 64, 66, 66)).astype(np.float32)  # padded 64px, 64ch
    cols = rng.normal(size=(4, 64 * 16, 32 * 32)).astype(np.float32)
    a = rng.uniform(0.0, 255.0, (256, 256))
    b = np.clip(a + rng.normal(0.0, 8.0, a.shape), 0.0, 255.0)
    return [
        ("im2col  (4,64,66,66) k4 s2", lambda K: K.im2col(xp, 4, 2, 32, 32)),
        ("col2im  adjoint of the above", lambda K: K.col2im(cols, 64, 66, 66, 4, 2, 32, 32)),
        ("window_sums 256x256 win8", lambda K: K.window_sums(a, b, 8)),
    ]


def use(name):
    os.environ[BACKEND_ENV] = name
    backend.reset()
    assert backend.name() == name
    return backend.active()


def bench_kernels(repeats):
    rows, agree = [], []
    for label, fn in kernel_cases():
        out, t = {}, {}
        for name in ("numba", "numpy"):
            K = use(name)
            fn(K)  # warm (first numba call may compile)
            t[name] = best_of(lambda: fn(K), repeats)
            out[name] = fn(K)
        gap = max(
            float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
            for x, y in zip(
                out["numba"] if isinstance(out["numba"], tuple) else (out["numba"],),
                out["numpy"] if isinstance(out["numpy"], tuple) else (out["numpy"],),
            )
        )
        agree.append((label, gap))
        rows.append((label, t["numba"], t["numpy"]))
    return rows, agree


def make_trainer(workdir):
    weights = os.path.join(workdir, "extractor.npz")
    write_surrogate_weights(weights, seed=0)
    cfg = RunConfig.from_dict(
        {
            "seed": 3,
            "image_size": 128,
            "region_size": 64,
            "data": {"dir": workdir},
            "out_dir": os.path.join(workdir, "out"),
            "generator": {
                "num_unets": 1,
                "base_channels": 16,
                "depth": 4,
                "max_channels": 128,
            },
            "extractor": {"weights_path": weights},
            "train": {"epochs": 1, "batch_size": 2},
        }
    )
    images = np.stack([imaging.make_phantom(s, 128) for s in range(4)])
    return cfg, images, FeatureExtractor.from_path(weights)


def bench_step(steps):
    times = {}
    with tempfile.TemporaryDirectory() as workdir:
        cfg, images, extractor = make_trainer(workdir)
        order, regions = T.epoch_plan(
            cfg.seed, 0, len(images), cfg.image_size, cfg.region_size
        )
        batches = T.plan_batches(order, regions, cfg.train.batch_size)
        for name in ("numba", "numpy"):
            use(name)
            tr = T.Trainer(cfg, images, extractor)
            tr.step(*batches[0])  # warm caches and (first time) the JIT
            t0 = time.perf_counter()
            for k in range(steps):
                tr.step(*batches[(1 + k) % len(batches)])
            times[name] = (time.perf_counter() - t0) / steps
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="best-of-N per kernel")
    ap.add_argument("--steps", type=int, default=2, help="timed training steps per backend")
    args = ap.parse_args()

    prior = os.environ.get(BACKEND_ENV)
    try:
        rows, agree = bench_kernels(args.repeats)
        step_t = bench_step(args.steps)
        rows.append(("train step 128px bs2", step_t["numba"], step_t["numpy"]))

        width = max(len(r[0]) for r in rows) + 2
        print(f"{'case':<{width}}{'numba':>12}{'numpy':>12}{'numpy/numba':>14}")
        for label, tn, tp in rows:
            print(
                f"{label:<{width}}{tn * 1e3:>10.2f}ms{tp * 1e3:>10.2f}ms"
                f"{tp / tn:>13.1f}x"
            )
        print()
        for label, gap in agree:
            print(f"backend agreement {label}: max |diff| = {gap:.2e}")
    finally:
        if prior is None:
            os.environ.pop(BACKEND_ENV, None)
        else:
            os.environ[BACKEND_ENV] = prior
        backend.reset()


if __name__ == "__main__":
    main()
