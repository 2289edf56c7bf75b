"""Grayscale image IO, region handling, phantoms, and dataset manifests.

Images travel as 2D float32 arrays in [0, 1] (storage range); networks see
the same data mapped to [-1, 1] (model range). PNG is the only file format,
8 or 16 bit, single channel.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import DataError, ValidationError

SPLITS = ("train", "val")


@dataclass(frozen=True)
class RegionSpec:
    """A square region; `top`/`left` index the first row/column inside it."""

    top: int
    left: int
    size: int

    def validate(self, height, width):
        if self.size < 1:
            raise ValidationError(f"region size must be positive, got {self.size}")
        if self.top < 0 or self.left < 0:
            raise ValidationError(f"region origin out of bounds: {self}")
        if self.top + self.size > height or self.left + self.size > width:
            raise ValidationError(
                f"region {self} exceeds image extent {height}x{width}"
            )

    def slices(self):
        return (
            slice(self.top, self.top + self.size),
            slice(self.left, self.left + self.size),
        )


@dataclass
class InpaintingSample:
    """Ground truth plus its masked counterpart and the region that was hidden."""

    truth: np.ndarray
    context: np.ndarray
    region: RegionSpec


@dataclass
class DatasetManifest:
    seed: int
    entries: list  # (relative_path, split) pairs

    def paths(self, split):
        if split not in SPLITS:
            raise ValidationError(f"unknown split {split!r}")
        return [p for p, s in self.entries if s == split]


# -- range mapping -----------------------------------------------------------


def to_model_range(a):
    """[0,1] storage -> [-1,1] model."""
    return (np.asarray(a, dtype=np.float32) * 2.0 - 1.0).astype(np.float32)


def from_model_range(a):
    """[-1,1] model -> [0,1] storage, clipped."""
    return np.clip((np.asarray(a, dtype=np.float32) + 1.0) * 0.5, 0.0, 1.0).astype(
        np.float32
    )


# -- file IO ------------------------------------------------------------------


def load_image(path):
    """Read an 8- or 16-bit grayscale PNG into float32 [0, 1]."""
    try:
        img = PILImage.open(path)
        img.load()
    except FileNotFoundError:
        raise DataError(f"image not found: {path}")
    except Exception as exc:
        raise DataError(f"cannot read image {path}: {exc}")
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float32) / 255.0
    elif img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float32)
        if arr.max(initial=0.0) > 65535.0:
            raise ValidationError(f"{path}: sample values exceed 16-bit range")
        arr = arr / 65535.0
    else:
        raise ValidationError(
            f"{path}: expected single-channel grayscale PNG, got mode {img.mode!r}"
        )
    if arr.ndim != 2:
        raise ValidationError(f"{path}: expected 2D image, got shape {arr.shape}")
    return arr


def save_image(a, path, bit_depth=16):
    a = np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0)
    if a.ndim != 2:
        raise ValidationError(f"save_image expects a 2D array, got {a.shape}")
    if bit_depth == 16:
        q = np.round(a * 65535.0).astype(np.uint16)
        img = PILImage.fromarray(q)  # uint16 -> I;16
    elif bit_depth == 8:
        q = np.round(a * 255.0).astype(np.uint8)
        img = PILImage.fromarray(q)  # uint8 -> L
    else:
        raise ValidationError(f"bit_depth must be 8 or 16, got {bit_depth}")
    try:
        img.save(path, format="PNG")
    except OSError as exc:
        raise DataError(f"cannot write image {path}: {exc}")


def fit_to_size(a, size):
    """Center-crop or zero-pad a 2D array to (size, size)."""
    a = np.asarray(a, dtype=np.float32)
    h, w = a.shape
    if h > size:
        t = (h - size) // 2
        a = a[t : t + size, :]
    if w > size:
        l = (w - size) // 2
        a = a[:, l : l + size]
    h, w = a.shape
    if h < size or w < size:
        pt, pl = (size - h) // 2, (size - w) // 2
        a = np.pad(a, ((pt, size - h - pt), (pl, size - w - pl)))
    return a


# -- regions -------------------------------------------------------------------


def sample_region(rng, height, width, size):
    """Uniform placement of a size x size region fully inside the image."""
    if size > height or size > width:
        raise ValidationError(
            f"region size {size} larger than image {height}x{width}"
        )
    top = int(rng.integers(0, height - size + 1))
    left = int(rng.integers(0, width - size + 1))
    return RegionSpec(top, left, size)


def mask_image(a, region, fill):
    """Copy of `a` with the region replaced by `fill` (same range as `a`)."""
    region.validate(*a.shape)
    out = np.array(a, copy=True)
    out[region.slices()] = fill
    return out


def extract_region(a, region):
    region.validate(*a.shape)
    return np.array(a[region.slices()], copy=True)


def compose(context, patch, region):
    """Paste a region-sized patch into a copy of the context image."""
    region.validate(*context.shape)
    if patch.shape != (region.size, region.size):
        raise ValidationError(
            f"patch shape {patch.shape} does not match region size {region.size}"
        )
    out = np.array(context, copy=True)
    out[region.slices()] = patch
    return out


def region_mask(height, width, region, dtype=np.float32):
    """Binary mask, 1 inside the region."""
    region.validate(height, width)
    m = np.zeros((height, width), dtype=dtype)
    m[region.slices()] = 1
    return m


def make_sample(truth, region, fill):
    region.validate(*truth.shape)
    return InpaintingSample(
        truth=truth, context=mask_image(truth, region, fill), region=region
    )


# -- synthetic phantoms --------------------------------------------------------


def make_phantom(seed, size=256):
    """Deterministic soft-edged nested-ellipse phantom in [0, 1].

    The draw stream depends only on (seed, size): 3 to 8 concentric
    ellipses with distinct interior intensities on a dark background,
    plus a faint sum-of-cosines texture so no area is exactly flat.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(size)]))
    ys, xs = np.mgrid[0:size, 0:size]
    y = ys / (size - 1.0)
    x = xs / (size - 1.0)

    img = np.full((size, size), rng.uniform(0.01, 0.04))
    n_ell = int(rng.integers(3, 9))
    cy, cx = rng.uniform(0.42, 0.58, size=2)
    axis_a = rng.uniform(0.30, 0.40)
    axis_b = rng.uniform(0.22, 0.34)
    angle = rng.uniform(0.0, np.pi)
    levels = np.linspace(0.25, 0.92, n_ell)
    rng.shuffle(levels)
    edge = 0.015

    ca, sa = np.cos(angle), np.sin(angle)
    for i in range(n_ell):
        shrink = 0.78**i
        jy = cy + rng.uniform(-0.015, 0.015) * i
        jx = cx + rng.uniform(-0.015, 0.015) * i
        u = (x - jx) * ca + (y - jy) * sa
        v = -(x - jx) * sa + (y - jy) * ca
        r = np.sqrt((u / (axis_a * shrink)) ** 2 + (v / (axis_b * shrink)) ** 2)
        w = 1.0 / (1.0 + np.exp(np.clip((r - 1.0) / edge, -60.0, 60.0)))
        img = img * (1.0 - w) + levels[i] * w

    tex = np.zeros_like(img)
    for _ in range(3):
        fy, fx = rng.uniform(2.0, 8.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        tex += np.cos(2.0 * np.pi * (fy * y + fx * x) + phase)
    img = img + 0.015 * tex

    return np.clip(img, 0.0, 1.0).astype(np.float32)


def write_phantom_dataset(out_dir, count, size, seed):
    """Write `count` phantoms as 16-bit PNGs; returns their file names."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for i in range(count):
        name = f"phantom_{i:04d}.png"
        save_image(make_phantom(seed + i, size), os.path.join(out_dir, name))
        names.append(name)
    return names


# -- manifests -------------------------------------------------------------------


def build_manifest(names, seed, val_fraction):
    """Deterministic shuffled split; ceil(val_fraction * N) go to val."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValidationError(f"val_fraction must be in [0, 1), got {val_fraction}")
    if not names:
        raise ValidationError("cannot build a manifest from zero images")
    ordered = sorted(names)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_val = math.ceil(val_fraction * len(ordered))
    entries = []
    for rank, idx in enumerate(perm):
        split = "val" if rank < n_val else "train"
        entries.append((ordered[idx], split))
    entries.sort(key=lambda e: e[0])
    return DatasetManifest(seed=int(seed), entries=entries)


def write_manifest(manifest, path):
    lines = [f"seed={manifest.seed}\n"]
    lines += [f"{p}\t{s}\n" for p, s in manifest.entries]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise DataError(f"cannot write manifest {path}: {exc}")


def read_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}")
    if not lines or not lines[0].startswith("seed="):
        raise ValidationError(f"{path}: first manifest line must be seed=<int>")
    try:
        seed = int(lines[0][len("seed=") :])
    except ValueError:
        raise ValidationError(f"{path}: malformed seed header {lines[0]!r}")
    entries = []
    seen = set()
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"{path}: malformed manifest line {ln!r}")
        rel, split = parts
        if split not in SPLITS:
            raise ValidationError(f"{path}: unknown split {split!r} for {rel}")
        if rel in seen:
            raise ValidationError(f"{path}: duplicate manifest entry {rel}")
        seen.add(rel)
        entries.append((rel, split))
    if not entries:
        raise ValidationError(f"{path}: manifest lists no images")
    return DatasetManifest(seed=seed, entries=entries)
