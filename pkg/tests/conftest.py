import os

import numpy as np
import pytest

from inpaint_forge import backend, features, imaging
from inpaint_forge.config import RunConfig

# verdict lines recorded by the acceptance gate; replayed after capture ends
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance gate")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def vgg_weights_path(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("weights") / "extractor.npz")
    features.write_surrogate_weights(path, seed=0)
    return path


@pytest.fixture(scope="session")
def extractor(vgg_weights_path):
    return features.FeatureExtractor.from_path(vgg_weights_path)


def make_phantom_dir(root, count, size, seed, val_fraction):
    """Phantom PNGs plus manifest under `root`; returns str path."""
    root = str(root)
    os.makedirs(root, exist_ok=True)
    names = imaging.write_phantom_dataset(root, count, size, seed)
    manifest = imaging.build_manifest(names, seed, val_fraction)
    imaging.write_manifest(manifest, os.path.join(root, "manifest.txt"))
    return root


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """10 phantoms at 32x32, 8 train / 2 val."""
    return make_phantom_dir(
        tmp_path_factory.mktemp("tinydata"), 10, 32, seed=100, val_fraction=0.2
    )


def tiny_config_dict(data_dir, out_dir, weights_path, **overrides):
    """A 32x32 config small enough for second-scale training tests."""
    d = {
        "seed": 7,
        "image_size": 32,
        "region_size": 16,
        "data": {"dir": data_dir, "val_fraction": 0.2},
        "out_dir": out_dir,
        "generator": {
            "num_unets": 1,
            "base_channels": 8,
            "depth": 3,
            "max_channels": 32,
        },
        "global_discriminator": {
            "channels": [16, 1],
            "strides": [2, 1],
            "patch_size": 10,
        },
        "local_discriminator": {
            "channels": [16, 1],
            "strides": [2, 1],
            "patch_size": 10,
        },
        "extractor": {"weights_path": weights_path},
        "train": {"epochs": 2, "batch_size": 4, "log_every": 1},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(d.get(key), dict):
            d[key].update(val)
        else:
            d[key] = val
    return d


def tiny_config(data_dir, out_dir, weights_path, **overrides):
    return RunConfig.from_dict(
        tiny_config_dict(data_dir, out_dir, weights_path, **overrides)
    )


@pytest.fixture
def backend_guard():
    """Restore backend dispatch state around tests that poke the env flag."""
    yield
    backend.reset()


def rand_image(rng, shape=(32, 32)):
    return rng.uniform(0.0, 1.0, shape).astype(np.float32)
