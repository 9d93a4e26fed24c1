"""Streaming gesture detection with per-class maximum-subarray accumulation."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .bundle import DetectorBundle, DetectorVariant
from .codebook import assign, histogram_from_arrays
from .errors import NonMonotonicTime
from .features import descriptors
from .skeleton import JointImputer, SkeletonFrame

log = logging.getLogger(__name__)

BUFFER_FACTOR = 4  # assignment buffer length, in units of the longest training sequence


@dataclass(frozen=True)
class KadaneState:
    best_sum: float = 0.0
    best_span: tuple[int, int] | None = None
    cur_sum: float = 0.0
    cur_start: int | None = None
    last_t: int | None = None


def kadane_step(st: KadaneState, x: float, t: int) -> KadaneState:
    """Advance streaming Kadane by one score; the empty subarray (sum 0) is always allowed."""
    if st.last_t is not None and t <= st.last_t:
        raise NonMonotonicTime(f"frame {t} after {st.last_t}")
    if st.cur_sum > 0:
        cur, start = st.cur_sum + x, st.cur_start
    else:
        cur, start = x, t
    if cur > st.best_sum:
        return KadaneState(cur, (start, t), cur, start, t)
    return KadaneState(st.best_sum, st.best_span, cur, start, t)


def max_subarray(scores: Sequence[float]) -> tuple[float, int | None, int | None]:
    """Batch maximum subarray: ``(sum, start, end)``, or ``(0.0, None, None)`` if nothing beats empty."""
    best, bs, be = 0.0, None, None
    cur, cs = 0.0, 0
    for t, x in enumerate(scores):
        if cur > 0:
            cur += x
        else:
            cur, cs = x, t
        if cur > best:
            best, bs, be = cur, cs, t
    return best, bs, be


@dataclass(frozen=True)
class DetectionEvent:
    class_id: str
    start_frame: int
    end_frame: int
    score: float
    probability: float
    person_id: int = 0

    def to_record(self) -> dict:
        return {
            "class": self.class_id,
            "person": self.person_id,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "score": self.score,
            "probability": self.probability,
        }


class OnlineDetector:
    """Detector state for one tracked person.

    Feed frames in order with :meth:`step`; call :meth:`flush` at the end of
    a finite stream to score the last ``lag`` frames, whose symmetric
    differences need frames that will never arrive. Gesturelets for frame
    ``t`` are available once frame ``t + lag`` is seen (no output at all for
    the first ``2 * lag`` frames), and they are identical to the offline
    descriptors of the same stream.

    Single writer: one caller at a time per instance.
    """

    def __init__(self, bundle: DetectorBundle, variant: DetectorVariant | None = None,
                 person_id: int = 0):
        bundle.check()
        self.bundle = bundle
        self.variant = variant or bundle.variant
        if self.variant != bundle.variant:
            replace(bundle, variant=self.variant).check()
        self.person_id = person_id
        model = bundle.model
        self._W = model.weights
        self._frame_bias = model.frame_bias()
        self._theta = model.theta
        self._C = len(model.classes)
        self._neutral = (
            model.index(self.variant.neutral_class) if self.variant.kind == "neutral" else None
        )
        self._lag = bundle.gesturelet.lag
        longest = model.max_train_length or int(round(4 * model.mean_train_length))
        self._bound = max(BUFFER_FACTOR * longest, 2 * self._lag + 2)

        self._imputer = JointImputer(bundle.layout)
        self._window: deque[tuple[int, np.ndarray]] = deque(maxlen=2 * self._lag + 1)
        self._n_seen = 0
        self._last_frame: int | None = None
        self._flushed = False
        self.neutral_resets = 0
        self.overflow_resets = 0
        self._reset()

    # -- state -----------------------------------------------------------------

    def _reset(self, last_t: int | None = None):
        self.kadane = [KadaneState(last_t=last_t) for _ in range(self._C)]
        self.recent: deque[np.ndarray] = deque(maxlen=self.variant.s)
        self.assignments: deque[tuple[int, np.ndarray, np.ndarray]] = deque(maxlen=self._bound)

    # -- public API ------------------------------------------------------------

    def step(self, frame: SkeletonFrame) -> list[DetectionEvent]:
        if self._flushed:
            raise RuntimeError("detector already flushed")
        if self._last_frame is not None and frame.frame_index <= self._last_frame:
            raise NonMonotonicTime(f"frame {frame.frame_index} after {self._last_frame}")
        self._last_frame = frame.frame_index
        self._window.append((frame.frame_index, self._imputer(frame)))
        self._n_seen += 1
        lag = self._lag
        if self._n_seen < 2 * lag + 1:
            return []
        if self._n_seen == 2 * lag + 1:
            local = np.arange(lag + 1)
        else:
            local = np.array([lag])
        return self._score_window(local)

    def flush(self) -> list[DetectionEvent]:
        """Score the frames still waiting for future neighbours (end of stream)."""
        if self._flushed:
            return []
        self._flushed = True
        n = len(self._window)
        if n == 0:
            return []
        if self._n_seen <= 2 * self._lag:
            local = np.arange(n)
        else:
            local = np.arange(self._lag + 1, n)
        return self._score_window(local)

    # -- internals -------------------------------------------------------------

    def _score_window(self, local: np.ndarray) -> list[DetectionEvent]:
        poses = np.stack([p for _, p in self._window])
        G = descriptors(poses, self.bundle.gesturelet, self.bundle.layout, local)
        events = []
        for k, g in zip(local, G):
            ev = self._process(self._window[k][0], g)
            if ev is not None:
                events.append(ev)
        return events

    def _process(self, t: int, g: np.ndarray) -> DetectionEvent | None:
        a = assign(g, self.bundle.codebook, self.bundle.m)
        scores = self._W[:, a.ids] @ a.weights + self._frame_bias
        self.assignments.append((t, a.ids, a.weights))
        self.recent.append(scores)
        self.kadane = [kadane_step(st, float(x), t) for st, x in zip(self.kadane, scores)]

        oldest = min(
            (s for st in self.kadane for s in (
                st.best_span[0] if st.best_span else None,
                st.cur_start if st.cur_sum > 0 else None,
            ) if s is not None),
            default=t,
        )
        if t - oldest + 1 > self._bound:
            log.debug("person %s: live span exceeds buffer at frame %d, resetting", self.person_id, t)
            self.overflow_resets += 1
            self._reset(t)
            return None

        winner, margin = None, 0.0
        for i, st in enumerate(self.kadane):
            if st.best_span is None or not st.best_sum > self._theta[i]:
                continue
            if self.variant.kind == "generated":
                if len(self.recent) < self.variant.s or any(r[i] > 0 for r in self.recent):
                    continue
            mg = st.best_sum - self._theta[i]
            if winner is None or mg > margin:
                winner, margin = i, mg
        if winner is None:
            return None

        st = self.kadane[winner]
        start, end = st.best_span
        span = [(ids, w) for f, ids, w in self.assignments if start <= f <= end]
        h = histogram_from_arrays(
            np.concatenate([ids for ids, _ in span]), np.concatenate([w for _, w in span]),
            self.bundle.codebook.K,
        )
        model = self.bundle.model
        dec = float(model.decision_values(h)[winner])
        prob = model.probability(winner, dec)
        self._reset(t)
        if winner == self._neutral:
            self.neutral_resets += 1
            log.debug("person %s: neutral firing over [%d, %d], state reset", self.person_id, start, end)
            return None
        return DetectionEvent(model.classes[winner], int(start), int(end), float(st.best_sum), prob,
                              self.person_id)


def run_stream(bundle: DetectorBundle, frames: Sequence[SkeletonFrame],
               variant: DetectorVariant | None = None, person_id: int = 0) -> list[DetectionEvent]:
    """Run one detector over a finite single-person stream, flushing at the end."""
    det = OnlineDetector(bundle, variant, person_id)
    events = []
    for f in frames:
        events.extend(det.step(f))
    events.extend(det.flush())
    return events


def generate_augmented_histograms(assigned: Sequence[tuple[str, np.ndarray, np.ndarray]], K: int,
                                  seed: int, augmentation: bool = True,
                                  prefix_fraction: float = 0.25):
    """Training histograms for the ``generated`` variant.

    ``assigned`` holds ``(label, ids, weights)`` per sequence, with ids and
    weights shaped (n, m). Each sequence yields its own histogram and, when
    ``augmentation`` is on, the histogram of the sequence followed by the
    first ``prefix_fraction`` of a randomly drawn sequence of another class,
    labeled with the original class. Returns ``(H, labels)``.
    """
    labels = [str(l) for l, _, _ in assigned]
    if len(set(labels)) < 2:
        raise ValueError("augmentation needs at least two classes")
    rng = np.random.default_rng(seed)
    H, out_labels = [], []
    for label, ids, w in assigned:
        H.append(histogram_from_arrays(ids, w, K))
        out_labels.append(label)
        if not augmentation:
            continue
        others = [j for j, l in enumerate(labels) if l != label]
        j = others[int(rng.integers(len(others)))]
        _, ids_j, w_j = assigned[j]
        n_pre = max(1, int(len(ids_j) * prefix_fraction))
        H.append(histogram_from_arrays(
            np.concatenate([np.ravel(ids), np.ravel(ids_j[:n_pre])]),
            np.concatenate([np.ravel(w), np.ravel(w_j[:n_pre])]),
            K,
        ))
        out_labels.append(label)
    return np.array(H), out_labels
