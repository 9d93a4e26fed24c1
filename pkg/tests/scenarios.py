"""Scripted multi-person replays with known identities, shared by tracker tests and acceptance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from skelgest.data.synth import body_pose
from skelgest.skeleton import SkeletonFrame
from skelgest.tracker import Tracker, TrackerConfig
from skelgest.skeleton import OPENPOSE18

_BODY = body_pose()


def person(x: float, y: float, scale: float, rng: np.random.Generator, noise: float = 0.004,
           frame_index: int = 0) -> SkeletonFrame:
    J = _BODY * scale + np.array([x, y]) + rng.normal(0, noise, _BODY.shape)
    return SkeletonFrame(frame_index, J)


@dataclass
class Scenario:
    frames: list[list[tuple[str, SkeletonFrame]]]  # per frame: (true identity, detection)
    births: int
    deaths: int


def crossing(n: int = 60, seed: int = 0) -> Scenario:
    """Two people walk past each other; the farther one is smaller and higher in the image."""
    rng = np.random.default_rng(seed)
    xs = np.linspace(-1.5, 1.5, n)
    frames = []
    for t in range(n):
        frames.append([("near", person(xs[t], 0.0, 1.0, rng, frame_index=t)),
                       ("far", person(-xs[t], 0.25, 0.7, rng, frame_index=t))])
    return Scenario(frames, births=2, deaths=0)


def enter_leave(seed: int = 0) -> Scenario:
    """A stays (with a 3-frame dropout), B enters at 10 and leaves after 29, C enters at 40."""
    rng = np.random.default_rng(seed)
    frames = []
    for t in range(50):
        dets = []
        if not 20 <= t <= 22:
            dets.append(("A", person(-1.0 + 0.01 * t, 0.0, 1.0, rng, frame_index=t)))
        if 10 <= t <= 29:
            dets.append(("B", person(1.0 - 0.01 * t, 0.1, 0.9, rng, frame_index=t)))
        if t >= 40:
            dets.append(("C", person(0.2, -0.1, 1.1, rng, frame_index=t)))
        order = rng.permutation(len(dets))
        frames.append([dets[i] for i in order])
    # B is missed at frames 30..34 and removed at the fifth miss; A's dropout is shorter
    return Scenario(frames, births=3, deaths=1)


def replay(scenario: Scenario, config: TrackerConfig | None = None):
    """Run a tracker over the scenario; returns (tracker, identity switches, shared ids)."""
    tracker = Tracker(OPENPOSE18, config or TrackerConfig())
    owner: dict[str, int] = {}
    switches = 0
    shared = 0
    for dets in scenario.frames:
        mapping = tracker.step([d for _, d in dets])
        ids = [mapping[j] for j in range(len(dets))]
        shared += len(ids) - len(set(ids))
        for (who, _), tid in zip(dets, ids):
            if who in owner and owner[who] != tid:
                switches += 1
            owner[who] = tid
    taken = list(owner.values())
    shared += len(taken) - len(set(taken))
    return tracker, switches, shared
