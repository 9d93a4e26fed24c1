"""Parametric 2D gesture generator on the 18-joint pose-estimator layout.

Each gesture ramps out of a relaxed standing pose into its motion and back
(``rest_frames`` of extra stillness can pad both ends). The neutral class holds one idle posture
(hands clasped, hands on hips, arms crossed, ...) for the whole sequence.
Coordinates are y-up, roughly in meters, hip center at the body origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..skeleton import OPENPOSE18, LabeledTimeline, SkeletonFrame, SkeletonSequence

GESTURES = ("bowing", "clapping", "drinking", "jumping", "waving")
ALL_CLASSES = GESTURES + ("neutral",)

_DEFAULT_DURATIONS = {
    "bowing": (70, 10),
    "clapping": (56, 10),
    "drinking": (76, 10),
    "jumping": (60, 10),
    "waving": (60, 10),
    "neutral": (120, 30),
}
_DEFAULT_PERIODS = {"waving": 14, "clapping": 16, "jumping": 24}

# segment lengths
_TORSO, _SHOULDER_HALF, _UPPER_ARM, _FOREARM = 0.50, 0.18, 0.28, 0.26
_HIP_HALF, _THIGH, _SHIN, _NECK_NOSE = 0.10, 0.45, 0.45, 0.16

_REST = dict(phi=0.0, ra=0.12, re=0.15, la=0.12, le=0.15, crouch=0.0, head=0.0, lean_x=0.0)

# idle postures for the neutral class: (parameter overrides, per-parameter jitter in rad)
_IDLE = (
    ({"ra": 0.80, "re": 1.35, "la": 0.80, "le": 1.35}, 0.10),   # hands on hips
    ({"ra": 0.20, "re": 2.25, "la": 0.20, "le": 2.25}, 0.10),   # arms crossed
    ({"ra": 1.60, "re": 2.60, "la": 1.60, "le": 2.60}, 0.10),   # hands behind head
    ({"la": 0.30, "le": 2.00}, 0.10),                           # left hand at chin
    ({"ra": 1.40, "re": 0.10}, 0.10),                           # pointing right
    ({"la": 1.40, "le": 0.10}, 0.10),                           # pointing left
)


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple[str, ...] = ALL_CLASSES
    sequences_per_class: int = 60
    noise_sigma: float = 0.03
    durations: dict = field(default_factory=lambda: dict(_DEFAULT_DURATIONS))
    periods: dict = field(default_factory=lambda: dict(_DEFAULT_PERIODS))
    rest_frames: int = 0
    ramp_frames: int = 8
    dropout: float = 0.0
    fps: float = 30.0
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.classes) - set(ALL_CLASSES)
        if unknown:
            raise ValueError(f"unknown synthetic classes {sorted(unknown)}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        for c in self.classes:
            mean, jitter = self.durations[c]
            if mean - jitter < 5:  # 2*lag+1 at the default lag
                raise ValueError(f"duration of {c} can fall below 5 frames")


def _rot(v: np.ndarray, ang: float) -> np.ndarray:
    c, s = math.cos(ang), math.sin(ang)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def body_pose(phi=0.0, ra=0.12, re=0.15, la=0.12, le=0.15, crouch=0.0, head=0.0,
              lean_x=0.0) -> np.ndarray:
    """Joint positions (18, 2) for a set of body angles.

    ``phi`` is torso pitch (bowing foreshortens the torso), ``ra``/``la``
    shoulder abduction from hanging, ``re``/``le`` elbow flexion towards
    the midline, ``crouch`` knee bend in [0, 1], ``head`` a sideways head
    offset and ``lean_x`` a sideways shift of the upper body.
    """
    J = np.zeros((18, 2))
    c = math.cos(phi)
    neck = np.array([lean_x, _TORSO * c])
    J[1] = neck
    J[0] = neck + [head, _NECK_NOSE * max(c, 0.2)]
    J[14] = J[0] + [-0.035, 0.03]
    J[15] = J[0] + [0.035, 0.03]
    J[16] = J[0] + [-0.075, 0.01]
    J[17] = J[0] + [0.075, 0.01]

    down = np.array([0.0, -1.0])
    for sho, elb, wri, side, a, e in ((2, 3, 4, -1.0, ra, re), (5, 6, 7, 1.0, la, le)):
        J[sho] = neck + [side * _SHOULDER_HALF, -0.02]
        upper = _rot(down, -side * a)
        J[elb] = J[sho] + _UPPER_ARM * upper
        J[wri] = J[elb] + _FOREARM * _rot(upper, side * e)

    bend = 1.0 - 0.35 * crouch
    for hip, knee, ank, side in ((8, 9, 10, -1.0), (11, 12, 13, 1.0)):
        J[hip] = [side * _HIP_HALF, 0.0]
        J[knee] = J[hip] + [side * 0.08 * crouch, -_THIGH * bend]
        J[ank] = J[knee] + [-side * 0.04 * crouch, -_SHIN * bend]
    return J


def _envelope(n: int, rest: int, ramp: int) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    up = np.clip((t - rest) / ramp, 0, 1)
    down = np.clip((n - 1 - rest - t) / ramp, 0, 1)
    x = np.minimum(up, down)
    return x * x * (3 - 2 * x)


def _gesture_params(label: str, n: int, cfg: SynthConfig, rng: np.random.Generator) -> list[dict]:
    env = _envelope(n, cfg.rest_frames, cfg.ramp_frames)
    rest = {k: v + (rng.normal(0, 0.03) if k in ("ra", "re", "la", "le") else 0.0)
            for k, v in _REST.items()}
    amp = rng.uniform(0.9, 1.1)
    phase = rng.uniform(0, 2 * math.pi)
    t = np.arange(n)
    out = []
    for k in range(n):
        p = dict(rest)
        e = env[k]
        if label == "waving":
            w = math.sin(2 * math.pi * t[k] / cfg.periods["waving"] + phase)
            p["ra"] += e * 2.3 * amp
            p["re"] += e * (0.6 + 0.45 * amp * w)
        elif label == "clapping":
            w = math.sin(2 * math.pi * t[k] / cfg.periods["clapping"] + phase)
            p["ra"] += e * 0.25
            p["la"] += e * 0.25
            p["re"] += e * (1.45 + 0.35 * amp * w)
            p["le"] += e * (1.45 + 0.35 * amp * w)
        elif label == "bowing":
            p["phi"] = e * 0.9 * amp
        elif label == "drinking":
            p["ra"] += e * 0.25
            p["re"] += e * 2.45 * amp
            p["head"] = -0.02 * e
        elif label == "jumping":
            w = math.sin(2 * math.pi * t[k] / cfg.periods["jumping"] + phase)
            p["crouch"] = e * 0.5 * (1 + w) * amp
            p["ra"] += e * 0.35 * (1 - w)
            p["la"] += e * 0.35 * (1 - w)
        elif label != "neutral":
            raise ValueError(label)
        out.append(p)
    return out


def _neutral_params(n: int, rng: np.random.Generator) -> list[dict]:
    overrides, jitter = _IDLE[int(rng.integers(len(_IDLE)))]
    p = dict(_REST)
    for k, v in overrides.items():
        p[k] = v + rng.normal(0, jitter)
    return [p] * n


def _jump_height(label: str, params: list[dict]) -> np.ndarray:
    if label != "jumping":
        return np.zeros(len(params))
    crouch = np.array([p["crouch"] for p in params])
    return 0.3 * np.clip(0.5 - crouch, 0, None)


def synth_sequence(label: str, n: int, cfg: SynthConfig, rng: np.random.Generator,
                   source_id: str = "") -> SkeletonSequence:
    params = _neutral_params(n, rng) if label == "neutral" else _gesture_params(label, n, cfg, rng)
    scale = rng.uniform(0.9, 1.1)
    origin = np.array([rng.uniform(-1.0, 1.0), 1.0 + rng.uniform(-0.2, 0.2)])
    lift = _jump_height(label, params)
    poses = np.stack([body_pose(**p) for p in params]) * scale
    poses += origin
    poses[:, :, 1] += lift[:, None]
    if cfg.noise_sigma > 0:
        poses += rng.normal(0, cfg.noise_sigma, poses.shape)
    frames = []
    for i, P in enumerate(poses):
        conf = np.ones(18)
        if cfg.dropout > 0:
            conf[rng.random(18) < cfg.dropout] = 0.0
        frames.append(SkeletonFrame(i, P, conf, timestamp_s=i / cfg.fps))
    return SkeletonSequence(OPENPOSE18.name, tuple(frames), label, source_id)


def synth_gestures(cfg: SynthConfig) -> tuple[list[SkeletonSequence], list[LabeledTimeline]]:
    """Labeled sequences plus one whole-sequence ground-truth timeline each; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    seqs, timelines = [], []
    for label in cfg.classes:
        mean, jitter = cfg.durations[label]
        for i in range(cfg.sequences_per_class):
            n = int(rng.integers(mean - jitter, mean + jitter + 1))
            seq = synth_sequence(label, n, cfg, rng, f"{label}_{i:03d}")
            seqs.append(seq)
            timelines.append(LabeledTimeline(n, ((label, 0, n - 1),)))
    return seqs, timelines


def split(sequences: list[SkeletonSequence], test_fraction: float, seed: int):
    """Stratified train/test split, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    labels = sorted({s.label for s in sequences})
    for lab in labels:
        group = [s for s in sequences if s.label == lab]
        order = rng.permutation(len(group))
        n_test = int(round(test_fraction * len(group)))
        test += [group[i] for i in order[:n_test]]
        train += [group[i] for i in order[n_test:]]
    return train, test
