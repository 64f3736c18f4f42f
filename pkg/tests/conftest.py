"""Shared fixtures: synthetic dataset trees and small model instances.

Everything here is session-scoped and lazy, so test modules only pay for
the corpora they actually touch. Trees are deterministic (seeded), which
keeps any golden-ish assertions stable across runs.
"""

import numpy as np
import pytest

from gestigo.datasets import SWIPE_CLASSES, parse_dataset, subset_manifest
from gestigo.model import GestureNet, ModelConfig, swipe_subset_config
from gestigo.raster import RenderConfig
from gestigo.synth import generate_dataset_tree, synthetic_sequence
from gestigo.training import encode_for_training


@pytest.fixture(scope="session")
def dhg_toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("dhg_toy")
    return generate_dataset_tree("DHG1428_14G", root, size="toy")


@pytest.fixture(scope="session")
def shrec_toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("shrec_toy")
    return generate_dataset_tree("SHREC2017_14G", root, size="toy")


@pytest.fixture(scope="session")
def lmdhg_toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("lmdhg_toy")
    return generate_dataset_tree("LMDHG", root, size="toy")


@pytest.fixture(scope="session")
def fpha_toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("fpha_toy")
    return generate_dataset_tree("FPHA", root, size="toy")


@pytest.fixture(scope="session")
def dhg_toy_manifest(dhg_toy_root):
    return parse_dataset("DHG1428_14G", dhg_toy_root)


@pytest.fixture(scope="session")
def toy_encoded(dhg_toy_manifest):
    """Two-stream 32px arrays for the 24-gesture toy tree (fast master render)."""
    return encode_for_training(
        dhg_toy_manifest, ("custom", "top-down"), (32,),
        render_cfg=RenderConfig(image_px=320))


def tiny_config(**kw):
    """A deliberately small architecture for fast forward/backward tests."""
    base = dict(
        dataset_id="DHG1428_14G", class_count=14,
        vo_names=("custom", "top-down"),
        encoder_widths=(8, 16), tuner_widths=(4,),
        head_hidden=32, tuner_head_hidden=16,
        stage_sizes=(32,), pseudo_px=32, seed=17,
    )
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def service_model():
    """Small untrained swipe-subset model; enough for protocol/equivalence tests."""
    config = swipe_subset_config(
        encoder_widths=(8, 16), tuner_widths=(4,), head_hidden=32,
        tuner_head_hidden=16, stage_sizes=(48,), pseudo_px=32)
    return GestureNet(config)


@pytest.fixture(scope="session")
def swipe_sequences():
    """Fifty synthetic swipe gestures (22 joints, labels drawn from 7..13)."""
    rng = np.random.default_rng(404)
    out = []
    for i in range(50):
        label = int(rng.integers(7, 14))
        out.append(synthetic_sequence("DHG1428_14G", label, seed=1000 + i))
    return out
