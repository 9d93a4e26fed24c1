"""Labeled sequence datasets on disk: a directory with ``manifest.json`` and one file per sequence.

Manifest::

    {"layout": "openpose18", "fps": 30.0,
     "sequences": [{"file": "waving_000.jsonl", "label": "waving", "source_id": "waving_000"},
                   {"file": "S001C001P001R001A023.skeleton", "label": "waving", "format": "ntu"}]}

``format`` is ``stream`` (single-person line-delimited frames, the default)
or ``ntu``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Sequence

from ..errors import ConfigError, ParseError
from ..skeleton import SkeletonFrame, SkeletonSequence, get_layout
from .ntu import parse_ntu_skeleton
from .stream import frames_to_stream, iter_stream, write_stream

MANIFEST = "manifest.json"


def read_sequence_stream(path: str | os.PathLike, layout_name: str, label: str | None = None,
                         source_id: str = "") -> SkeletonSequence:
    layout = get_layout(layout_name)
    frames = []
    with open(path, encoding="utf-8") as fh:
        for i, fr in enumerate(iter_stream(fh, layout)):
            if len(fr.persons) != 1:
                raise ParseError(f"{path}: frame {i} has {len(fr.persons)} persons, expected 1")
            frames.append(fr.persons[0].to_frame(i, fr.t))
    return SkeletonSequence(layout.name, tuple(frames), label, source_id or Path(path).stem)


def write_dataset(directory: str | os.PathLike, sequences: Sequence[SkeletonSequence],
                  fps: float = 30.0) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    layouts = {s.layout_ref for s in sequences}
    if len(layouts) > 1:
        raise ValueError(f"mixed layouts in one dataset: {sorted(layouts)}")
    entries = []
    for k, s in enumerate(sequences):
        name = f"{s.source_id or f'seq_{k:05d}'}.jsonl"
        with open(d / name, "w", encoding="utf-8") as fh:
            write_stream(frames_to_stream(s.frames), fh)
        entries.append({"file": name, "label": s.label, "source_id": s.source_id})
    manifest = {"layout": layouts.pop() if layouts else "openpose18", "fps": fps, "sequences": entries}
    (d / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return d / MANIFEST


def read_dataset(directory: str | os.PathLike) -> tuple[str, list[SkeletonSequence]]:
    """Returns ``(layout name, sequences)`` in manifest order."""
    d = Path(directory)
    mpath = d / MANIFEST if d.is_dir() else d
    if not mpath.exists():
        raise ConfigError(f"no dataset manifest at {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        layout_name = manifest["layout"]
        fps = float(manifest.get("fps", 30.0))
        entries = manifest["sequences"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"{mpath}: bad manifest: {exc}") from None
    get_layout(layout_name)
    seqs = []
    for e in entries:
        path = mpath.parent / e["file"]
        fmt = e.get("format", "stream")
        if fmt == "stream":
            seqs.append(read_sequence_stream(path, layout_name, e.get("label"), e.get("source_id", "")))
        elif fmt == "ntu":
            if layout_name != "ntu25":
                raise ConfigError("ntu files need layout ntu25")
            seq = parse_ntu_skeleton(path.read_text(encoding="utf-8"), fps, e.get("label"),
                                     e.get("source_id", path.stem))
            seqs.append(_renumber(seq))
        else:
            raise ParseError(f"{mpath}: unknown sequence format {fmt!r}")
    return layout_name, seqs


def _renumber(seq: SkeletonSequence) -> SkeletonSequence:
    frames = tuple(SkeletonFrame(i, f.joints, f.confidence, f.valid, f.timestamp_s)
                   for i, f in enumerate(seq.frames))
    return SkeletonSequence(seq.layout_ref, frames, seq.label, seq.source_id)
