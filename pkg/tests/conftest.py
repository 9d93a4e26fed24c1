from __future__ import annotations

import numpy as np
import pytest

from skelgest.bundle import DetectorVariant
from skelgest.data.synth import SynthConfig, split, synth_gestures
from skelgest.pipeline import train_bundle
from skelgest.skeleton import OPENPOSE18, SkeletonFrame


def make_frame(joints, frame_index=0, conf=None):
    joints = np.asarray(joints, dtype=float)
    return SkeletonFrame(frame_index, joints, conf)


@pytest.fixture(scope="session")
def small_data():
    """Three gestures plus neutral, 12 sequences each; split 2:1."""
    cfg = SynthConfig(classes=("waving", "clapping", "bowing", "neutral"), sequences_per_class=12, seed=3)
    seqs, _ = synth_gestures(cfg)
    return split(seqs, 1 / 3, 3)


@pytest.fixture(scope="session")
def vanilla_bundle(small_data):
    train, _ = small_data
    bundle, _ = train_bundle(train, OPENPOSE18, K=24, variant=DetectorVariant.vanilla(), seed=3)
    return bundle


@pytest.fixture(scope="session")
def neutral_bundle(small_data):
    train, _ = small_data
    bundle, _ = train_bundle(train, OPENPOSE18, K=24, variant=DetectorVariant.neutral(), seed=3)
    return bundle
