"""Reader and writer for NTU RGB+D ``.skeleton`` text files.

Layout::

    <frame count>
    per frame:  <body count>
      per body: <10-field body header, first field the body id>
                <joint count>
                <one line per joint: x y z followed by 9 more values>

Only x, y, z are kept. When several bodies appear, the one present in the
most frames is returned.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import MalformedHeader, TruncatedFile
from ..skeleton import NTU25, SkeletonFrame, SkeletonSequence

BODY_HEADER_FIELDS = 10
JOINT_FIELDS = 12


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what: str) -> tuple[str, int]:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise TruncatedFile(f"file ends while reading {what}", self.pos + 1)
        self.pos += 1
        return self.lines[self.pos - 1], self.pos

    def count(self, what: str) -> int:
        text, line = self.next(what)
        parts = text.split()
        try:
            if len(parts) != 1:
                raise ValueError
            n = int(parts[0])
        except ValueError:
            raise MalformedHeader(f"expected a single integer {what}, got {text.strip()!r}", line) from None
        if n < 0:
            raise MalformedHeader(f"negative {what}", line)
        return n


def parse_ntu_skeleton(text: str, fps: float = 30.0, label: str | None = None,
                       source_id: str = "") -> SkeletonSequence:
    src = _Lines(text)
    if not text.strip():
        raise TruncatedFile("empty file has no frame count", 1)
    n_frames = src.count("frame count")
    bodies: dict[str, list[tuple[int, np.ndarray]]] = {}
    order: list[str] = []
    for f in range(n_frames):
        n_bodies = src.count("body count")
        for _ in range(n_bodies):
            header, hline = src.next("body header")
            fields = header.split()
            if len(fields) != BODY_HEADER_FIELDS:
                raise MalformedHeader(
                    f"body header needs {BODY_HEADER_FIELDS} fields, got {len(fields)}", hline
                )
            body_id = fields[0]
            n_joints = src.count("joint count")
            if n_joints != NTU25.joint_count:
                raise MalformedHeader(f"expected {NTU25.joint_count} joints, got {n_joints}", src.pos)
            xyz = np.empty((n_joints, 3))
            for j in range(n_joints):
                jt, jline = src.next("joint line")
                vals = jt.split()
                if len(vals) < 3:
                    raise TruncatedFile(f"joint line has {len(vals)} values, needs at least 3", jline)
                try:
                    xyz[j] = [float(v) for v in vals[:3]]
                except ValueError:
                    raise TruncatedFile(f"non-numeric joint coordinates {vals[:3]}", jline) from None
            if body_id not in bodies:
                bodies[body_id] = []
                order.append(body_id)
            bodies[body_id].append((f, xyz))
    if not bodies:
        return SkeletonSequence(NTU25.name, (), label, source_id)
    best = max(order, key=lambda b: len(bodies[b]))  # first seen wins ties
    frames = []
    for f, xyz in bodies[best]:
        if frames and frames[-1].frame_index == f:
            continue  # same body id twice in one frame: keep the first
        frames.append(SkeletonFrame(f, xyz, timestamp_s=f / fps))
    return SkeletonSequence(NTU25.name, tuple(frames), label, source_id)


def write_ntu_skeleton(bodies: Sequence[tuple[str, SkeletonSequence]], n_frames: int | None = None) -> str:
    """Serialize ``(body_id, sequence)`` pairs, frames aligned by ``frame_index``.

    Fields the reader ignores are written as zeros; coordinates use ``repr``
    so a read-back is exact.
    """
    per_frame: dict[int, list[tuple[str, np.ndarray]]] = {}
    last = -1
    for body_id, seq in bodies:
        if " " in body_id or not body_id:
            raise ValueError("body ids must be non-empty and contain no spaces")
        for fr in seq.frames:
            if fr.joints.shape != (NTU25.joint_count, 3):
                raise ValueError(f"expected 25x3 joints, got {fr.joints.shape}")
            per_frame.setdefault(fr.frame_index, []).append((body_id, fr.joints))
            last = max(last, fr.frame_index)
    total = last + 1 if n_frames is None else n_frames
    if total <= last:
        raise ValueError(f"n_frames={total} leaves out frame {last}")
    out = [str(total)]
    pad = " ".join(["0"] * (JOINT_FIELDS - 3))
    head_pad = " ".join(["0"] * (BODY_HEADER_FIELDS - 1))
    for f in range(total):
        present = per_frame.get(f, [])
        out.append(str(len(present)))
        for body_id, xyz in present:
            out.append(f"{body_id} {head_pad}")
            out.append(str(len(xyz)))
            out.extend(f"{x!r} {y!r} {z!r} {pad}" for x, y, z in xyz.tolist())
    return "\n".join(out) + "\n"
