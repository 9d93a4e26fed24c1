"""Segment-based frame categorization and the concatenated-stream evaluation protocol.

For one class, ground truth and prediction become binary timelines and
every frame gets exactly one category:

    positive frames (class present):  TP, Us, Ue, F, D
    negative frames (class absent):   TN, Os, Oe, M, I

Us/Ue are the unpredicted head/tail of a ground-truth event that some
prediction touches, F the unpredicted gaps between its predicted parts, D a
ground-truth event no prediction touches. Os/Oe/M/I mirror those for
predicted frames outside ground truth, so swapping ground truth and
prediction swaps Us<->Os, Ue<->Oe, F<->M and D<->I.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LengthMismatch
from .skeleton import LabeledTimeline, SkeletonFrame, SkeletonSequence

POSITIVE = ("tp", "us", "ue", "f", "d")
NEGATIVE = ("tn", "os", "oe", "m", "i")
CATEGORIES = POSITIVE + NEGATIVE
POSITIVE_RATES = ("tpr", "usr", "uer", "fr", "dr")
NEGATIVE_RATES = ("tnr", "osr", "oer", "mr", "ir")
RATE_NAMES = POSITIVE_RATES + NEGATIVE_RATES
_CODE = {c: i for i, c in enumerate(CATEGORIES)}


def _runs(b: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) of each run of True."""
    if b.size == 0:
        return []
    d = np.diff(np.concatenate([[0], b.astype(np.int8), [0]]))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def categorize_binary(g: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Category name per frame for binary ground truth ``g`` and prediction ``p``."""
    g = np.asarray(g, dtype=bool)
    p = np.asarray(p, dtype=bool)
    if g.shape != p.shape:
        raise LengthMismatch(f"timelines differ in length: {g.size} vs {p.size}")
    cat = np.full(g.size, -1, dtype=np.int8)
    cat[g & p] = _CODE["tp"]
    cat[~g & ~p] = _CODE["tn"]

    for s, e in _runs(g):
        hit = np.flatnonzero(p[s:e + 1])
        if hit.size == 0:
            cat[s:e + 1] = _CODE["d"]
            continue
        first, last = s + hit[0], s + hit[-1]
        cat[s:first] = _CODE["us"]
        cat[last + 1:e + 1] = _CODE["ue"]
        gap = np.flatnonzero(~p[first:last + 1]) + first
        cat[gap] = _CODE["f"]

    g_runs = _runs(g)
    for s, e in _runs(p):
        bridged = [(gs, ge) for gs, ge in g_runs if ge >= s and gs <= e]
        span = np.arange(s, e + 1)
        neg = span[~g[s:e + 1]]
        if not bridged:
            cat[neg] = _CODE["i"]
            continue
        lo, hi = bridged[0][0], bridged[-1][1]
        cat[neg[neg < lo]] = _CODE["os"]
        cat[neg[neg > hi]] = _CODE["oe"]
        cat[neg[(neg > lo) & (neg < hi)]] = _CODE["m"]

    assert (cat >= 0).all()
    return np.array(CATEGORIES)[cat]


def categorize(gt: LabeledTimeline, pred: LabeledTimeline, class_id: str) -> np.ndarray:
    if gt.length_frames != pred.length_frames:
        raise LengthMismatch(f"timelines differ in length: {gt.length_frames} vs {pred.length_frames}")
    return categorize_binary(gt.binary(class_id), pred.binary(class_id))


def count_categories(categories: Iterable[str]) -> dict[str, int]:
    counts = dict.fromkeys(CATEGORIES, 0)
    for c in categories:
        counts[c] += 1
    return counts


@dataclass
class ClassRates:
    """Rates for one class; a group is ``None`` when the class has no frames of that polarity."""

    positive: dict[str, float] | None
    negative: dict[str, float] | None
    counts: dict[str, int] = field(default_factory=dict)

    def get(self, name: str) -> float | None:
        group = self.positive if name in POSITIVE_RATES else self.negative
        return None if group is None else group[name]


def rates(counts: dict[str, int]) -> ClassRates:
    n_pos = sum(counts[c] for c in POSITIVE)
    n_neg = sum(counts[c] for c in NEGATIVE)
    pos = {r: counts[c] / n_pos for r, c in zip(POSITIVE_RATES, POSITIVE)} if n_pos else None
    neg = {r: counts[c] / n_neg for r, c in zip(NEGATIVE_RATES, NEGATIVE)} if n_neg else None
    return ClassRates(pos, neg, dict(counts))


@dataclass
class MetricsReport:
    classes: dict[str, ClassRates]
    metadata: dict = field(default_factory=dict)

    def mean_rate(self, name: str) -> float:
        vals = [r.get(name) for r in self.classes.values()]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def to_record(self) -> dict:
        return {
            "metadata": self.metadata,
            "classes": {
                c: {"positive": r.positive, "negative": r.negative, "counts": r.counts}
                for c, r in self.classes.items()
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Plain-text table, one row per class and one column per rate."""
        head = f"{'class':<12}" + "".join(f"{n:>7}" for n in RATE_NAMES)
        lines = [head, "-" * len(head)]
        for c, r in self.classes.items():
            cells = []
            for n in RATE_NAMES:
                v = r.get(n)
                cells.append(f"{'-':>7}" if v is None else f"{v:7.3f}")
            lines.append(f"{c:<12}" + "".join(cells))
        lines.append(f"{'mean':<12}" + "".join(f"{self.mean_rate(n):7.3f}" for n in RATE_NAMES))
        return "\n".join(lines)


def evaluate(gt: LabeledTimeline, pred: LabeledTimeline, classes: Sequence[str]) -> MetricsReport:
    return MetricsReport({c: rates(count_categories(categorize(gt, pred, c))) for c in classes})


def average_reports(reports: Sequence[MetricsReport], metadata: dict | None = None) -> MetricsReport:
    """Per-class mean of each rate over the reports in which it is defined."""
    classes = list(dict.fromkeys(c for r in reports for c in r.classes))
    out = {}
    for c in classes:
        per = [r.classes[c] for r in reports if c in r.classes]
        groups = []
        for names, attr in ((POSITIVE_RATES, "positive"), (NEGATIVE_RATES, "negative")):
            defined = [getattr(p, attr) for p in per if getattr(p, attr) is not None]
            groups.append({n: float(np.mean([d[n] for d in defined])) for n in names} if defined else None)
        counts = {k: sum(p.counts.get(k, 0) for p in per) for k in CATEGORIES}
        out[c] = ClassRates(groups[0], groups[1], counts)
    return MetricsReport(out, dict(metadata or {}))


def delta_table(a: MetricsReport, b: MetricsReport) -> str:
    """Per-class ``b - a`` for every rate defined in both."""
    head = f"{'class':<12}" + "".join(f"{n:>8}" for n in RATE_NAMES)
    lines = [head, "-" * len(head)]
    for c in a.classes:
        if c not in b.classes:
            continue
        cells = []
        for n in RATE_NAMES:
            va, vb = a.classes[c].get(n), b.classes[c].get(n)
            cells.append(f"{'-':>8}" if va is None or vb is None else f"{vb - va:+8.3f}")
        lines.append(f"{c:<12}" + "".join(cells))
    return "\n".join(lines)


# -- concatenated test streams ------------------------------------------------

def build_stream(sequences: Sequence[SkeletonSequence], rng: np.random.Generator,
                 interleave_label: str | None = None,
                 fps: float = 30.0) -> tuple[list[SkeletonFrame], LabeledTimeline]:
    """Shuffle and concatenate labeled sequences into one renumbered stream.

    With ``interleave_label`` set, sequences of that label are taken out of
    the shuffle and one of them is inserted into every gap between
    consecutive other sequences, modelling a subject idling between
    gestures. When they run out they are reshuffled and reused.
    """
    if interleave_label is None:
        order = [sequences[i] for i in rng.permutation(len(sequences))]
    else:
        main = [s for s in sequences if s.label != interleave_label]
        fill = [s for s in sequences if s.label == interleave_label]
        main = [main[i] for i in rng.permutation(len(main))]
        if not fill or not main:
            order = main + [fill[i] for i in rng.permutation(len(fill))]
        else:
            pool: list[SkeletonSequence] = []
            order = []
            for k, s in enumerate(main):
                order.append(s)
                if k < len(main) - 1:
                    if not pool:
                        pool = [fill[i] for i in rng.permutation(len(fill))]
                    order.append(pool.pop())
    frames, segs = [], []
    t = 0
    for s in order:
        start = t
        for f in s.frames:
            frames.append(f.with_index(t, t / fps))
            t += 1
        if len(s) and s.label is not None:
            segs.append((s.label, start, t - 1))
    return frames, LabeledTimeline(t, tuple(segs))


def events_to_timeline(length: int, spans: Iterable[tuple[str, int, int]]) -> LabeledTimeline:
    """Predicted timeline from (class, start, end) spans; overlapping same-class spans are merged."""
    by_class: dict[str, list[tuple[int, int]]] = {}
    for c, s, e in spans:
        s, e = max(0, int(s)), min(length - 1, int(e))
        if s <= e:
            by_class.setdefault(str(c), []).append((s, e))
    segs = []
    for c, spans_c in by_class.items():
        spans_c.sort()
        cur_s, cur_e = spans_c[0]
        for s, e in spans_c[1:]:
            if s <= cur_e:
                cur_e = max(cur_e, e)
            else:
                segs.append((c, cur_s, cur_e))
                cur_s, cur_e = s, e
        segs.append((c, cur_s, cur_e))
    return LabeledTimeline(length, tuple(segs))


StreamRunner = Callable[[list, LabeledTimeline], list]


def null_runner(frames, gt):
    return []


def oracle_runner(frames, gt):
    return list(gt.segments)


class DetectorRunner:
    """Stream runner backed by the online detector; picklable for worker pools."""

    def __init__(self, bundle, variant=None):
        self.bundle = bundle
        self.variant = variant

    def __call__(self, frames, gt):
        from .detector import run_stream

        return [(e.class_id, e.start_frame, e.end_frame)
                for e in run_stream(self.bundle, frames, self.variant)]


def detector_runner(bundle, variant=None) -> StreamRunner:
    return DetectorRunner(bundle, variant)


def _one_repetition(sequences, runner, seed, r, classes, interleave_label):
    rng = np.random.default_rng([seed, r])
    frames, gt = build_stream(sequences, rng, interleave_label)
    pred = events_to_timeline(gt.length_frames, runner(frames, gt))
    return evaluate(gt, pred, classes)


def concat_eval(sequences: Sequence[SkeletonSequence], runner: StreamRunner, classes: Sequence[str],
                seed: int = 0, repetitions: int = 20, interleave_label: str | None = None,
                workers: int = 1) -> MetricsReport:
    """Average segment metrics over ``repetitions`` shuffled concatenations of ``sequences``."""
    if not sequences:
        raise ValueError("concat_eval needs at least one test sequence")
    args = [(sequences, runner, seed, r, list(classes), interleave_label) for r in range(repetitions)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(_one_repetition, *zip(*args)))
    else:
        reports = [_one_repetition(*a) for a in args]
    meta = {"seed": seed, "repetitions": repetitions, "interleave_label": interleave_label,
            "n_sequences": len(sequences)}
    return average_reports(reports, meta)
