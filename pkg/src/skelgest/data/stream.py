"""Line-delimited JSON skeleton streams, ground-truth files and event records.

Stream format, one frame per line::

    {"t": 0.033, "persons": [{"joints": [[x, y], ...], "conf": [c, ...], "id": 3}]}

``id`` is optional. Blank lines are skipped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from ..errors import LayoutMismatch, ParseError
from ..skeleton import LabeledTimeline, SkeletonFrame, SkeletonLayout

_FRAME_KEYS = {"t", "persons"}
_PERSON_KEYS = {"joints", "conf", "id"}


@dataclass(frozen=True, eq=False)
class PersonObservation:
    joints: np.ndarray
    conf: np.ndarray
    id: int | None = None

    def to_frame(self, frame_index: int, t: float) -> SkeletonFrame:
        return SkeletonFrame(frame_index, self.joints, self.conf, timestamp_s=t)

    def __eq__(self, other) -> bool:
        return (isinstance(other, PersonObservation) and self.id == other.id
                and np.array_equal(self.joints, other.joints) and np.array_equal(self.conf, other.conf))


@dataclass(frozen=True, eq=False)
class StreamFrame:
    t: float
    persons: tuple[PersonObservation, ...] = field(default_factory=tuple)

    def __eq__(self, other) -> bool:
        return isinstance(other, StreamFrame) and self.t == other.t and self.persons == other.persons


def _real(x, what: str, line: int) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{what} must be a number, got {x!r}", line)
    return float(x)


def _person(obj, layout: SkeletonLayout | None, line: int) -> PersonObservation:
    if not isinstance(obj, dict):
        raise ParseError("person entry must be an object", line)
    extra = set(obj) - _PERSON_KEYS
    if extra:
        raise ParseError(f"unexpected person fields {sorted(extra)}", line)
    if "joints" not in obj or "conf" not in obj:
        raise ParseError("person needs 'joints' and 'conf'", line)
    joints, conf = obj["joints"], obj["conf"]
    if not isinstance(joints, list) or not all(isinstance(j, list) for j in joints):
        raise ParseError("'joints' must be an array of coordinate arrays", line)
    if not isinstance(conf, list):
        raise ParseError("'conf' must be an array", line)
    dims = {len(j) for j in joints}
    if len(dims) > 1 or (dims and dims.pop() not in (2, 3)):
        raise ParseError("every joint must be [x, y] or [x, y, z] of one common size", line)
    J = np.array([[_real(v, "joint coordinate", line) for v in j] for j in joints], dtype=np.float64)
    C = np.array([_real(c, "confidence", line) for c in conf], dtype=np.float64)
    if len(C) != len(J):
        raise ParseError(f"{len(J)} joints but {len(C)} confidences", line)
    if np.any(C < 0) or np.any(C > 1):
        raise ParseError("confidences must lie in [0, 1]", line)
    if layout is not None and (J.shape[0] != layout.joint_count or (J.size and J.shape[1] != layout.dims)):
        raise LayoutMismatch(
            f"line {line}: person has {J.shape[0]} joints, layout {layout.name} expects "
            f"{layout.joint_count}x{layout.dims}"
        )
    pid = obj.get("id")
    if pid is not None and (isinstance(pid, bool) or not isinstance(pid, int)):
        raise ParseError(f"person id must be an integer, got {pid!r}", line)
    if J.size == 0:
        J = J.reshape(0, layout.dims if layout is not None else 2)
    return PersonObservation(J, C, pid)


def parse_line(text: str, line: int, layout: SkeletonLayout | None = None) -> StreamFrame:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line) from None
    if not isinstance(obj, dict):
        raise ParseError("frame record must be an object", line)
    if set(obj) != _FRAME_KEYS:
        raise ParseError(f"frame record needs exactly fields {sorted(_FRAME_KEYS)}, got {sorted(obj)}", line)
    t = _real(obj["t"], "t", line)
    if not math.isfinite(t):
        raise ParseError("t must be finite", line)
    if not isinstance(obj["persons"], list):
        raise ParseError("'persons' must be an array", line)
    return StreamFrame(t, tuple(_person(p, layout, line) for p in obj["persons"]))


def iter_stream(lines: Iterable[str], layout: SkeletonLayout | None = None) -> Iterator[StreamFrame]:
    """Parse frames lazily, one line at a time."""
    for n, text in enumerate(lines, start=1):
        if text.strip():
            yield parse_line(text, n, layout)


def parse_stream(text: str, layout: SkeletonLayout | None = None) -> list[StreamFrame]:
    return list(iter_stream(text.splitlines(), layout))


def frame_record(frame: StreamFrame) -> dict:
    persons = []
    for p in frame.persons:
        rec = {"joints": p.joints.tolist(), "conf": p.conf.tolist()}
        if p.id is not None:
            rec["id"] = int(p.id)
        persons.append(rec)
    return {"t": float(frame.t), "persons": persons}


def format_frame(frame: StreamFrame) -> str:
    return json.dumps(frame_record(frame), allow_nan=False)


def write_stream(frames: Iterable[StreamFrame], fh: IO[str] | None = None) -> str | None:
    """Serialize frames; returns the text when no file handle is given."""
    lines = (format_frame(f) + "\n" for f in frames)
    if fh is None:
        return "".join(lines)
    for ln in lines:
        fh.write(ln)
    return None


def frames_to_stream(frames: Sequence[SkeletonFrame], person_id: int | None = None) -> list[StreamFrame]:
    """Single-person stream from skeleton frames."""
    return [StreamFrame(f.timestamp_s, (PersonObservation(np.array(f.joints), np.array(f.confidence), person_id),))
            for f in frames]


# -- ground truth and detections ----------------------------------------------

def read_ground_truth(text: str, length_frames: int) -> LabeledTimeline:
    """Ground truth from a JSON list of ``{class, start_frame, end_frame}`` records."""
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(records, list):
        raise ParseError("ground truth must be a list of records")
    try:
        return LabeledTimeline.from_records(length_frames, records)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_ground_truth(gt: LabeledTimeline) -> str:
    return json.dumps(gt.to_records(), indent=1)


def format_event(record: dict) -> str:
    return json.dumps(record, sort_keys=False)
