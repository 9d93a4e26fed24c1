"""Offline training: descriptors, codebook, histograms, linear model, thresholds, calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .bundle import DetectorBundle, DetectorVariant, gesturelet_digest
from .classifier import (
    GestureModel,
    TrainConfig,
    calibrate,
    classify_histogram,
    frame_scores,
    learn_threshold,
    train_ovr,
)
from .codebook import assign_many, build_codebook, histogram_from_arrays
from .detector import generate_augmented_histograms, max_subarray
from .errors import DegenerateLabels
from .features import GestureletConfig, sequence_matrix
from .skeleton import SkeletonLayout, SkeletonSequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingSummary:
    classes: tuple[str, ...]
    thresholds: dict[str, float]
    train_accuracy: float
    n_sequences: int
    n_frames: int


def training_sequences(sequences: Sequence[SkeletonSequence],
                       variant: DetectorVariant) -> list[SkeletonSequence]:
    """Labeled sequences used for training; non-neutral variants leave the neutral class out."""
    out = [s for s in sequences if s.label is not None]
    if variant.kind != "neutral":
        out = [s for s in out if s.label != variant.neutral_class]
    elif not any(s.label == variant.neutral_class for s in out):
        raise DegenerateLabels(f"neutral variant needs sequences labeled {variant.neutral_class!r}")
    return out


def detection_scores(model: GestureModel, ids: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Max-subarray score of each class over one whole sequence, shape (C,)."""
    S = frame_scores(ids, weights, model)
    return np.array([max_subarray(S[:, i])[0] for i in range(S.shape[1])])


def fit_thresholds(model: GestureModel, assigned: Sequence[tuple[str, np.ndarray, np.ndarray]],
                   weight_factor: float) -> np.ndarray:
    scores = np.array([detection_scores(model, ids, w) for _, ids, w in assigned])
    labels = np.array([l for l, _, _ in assigned])
    theta = np.empty(len(model.classes))
    for i, c in enumerate(model.classes):
        theta[i], _ = learn_threshold(scores[labels == c, i], scores[labels != c, i], weight_factor)
    return theta


def fit_calibration(model: GestureModel, H: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    dec = model.decision_values(H)
    labels = np.asarray(labels)
    return np.array([calibrate(dec[:, i], labels == c) for i, c in enumerate(model.classes)])


def train_bundle(sequences: Sequence[SkeletonSequence], layout: SkeletonLayout,
                 gesturelet: GestureletConfig = GestureletConfig(), K: int = 64, m: int = 2,
                 train: TrainConfig = TrainConfig(),
                 variant: DetectorVariant = DetectorVariant(),
                 seed: int = 0) -> tuple[DetectorBundle, TrainingSummary]:
    """Full training run from labeled sequences to a ready-to-run detector bundle."""
    seqs = training_sequences(sequences, variant)
    if len({s.label for s in seqs}) < 2:
        raise DegenerateLabels("training needs at least two labeled classes")
    for s in seqs:
        if s.layout_ref != layout.name:
            raise DegenerateLabels(f"sequence {s.source_id} uses layout {s.layout_ref}, not {layout.name}")

    mats = [sequence_matrix(s, gesturelet, layout) for s in seqs]
    labels = [str(s.label) for s in seqs]
    lengths = np.array([len(M) for M in mats])
    cb = build_codebook(np.concatenate(mats), K, seed, gesturelet_digest(layout, gesturelet))
    assigned = []
    for lab, M in zip(labels, mats):
        ids, w = assign_many(M, cb, m)
        assigned.append((lab, ids, w))

    plain_H = np.array([histogram_from_arrays(ids, w, K) for _, ids, w in assigned])
    if variant.kind == "generated" and variant.augmentation:
        H, H_labels = generate_augmented_histograms(assigned, K, seed, augmentation=True)
    else:
        H, H_labels = plain_H, labels

    model = train_ovr(H, H_labels, replace(train, seed=train.seed), float(lengths.mean()))
    model = replace(
        model,
        max_train_length=int(lengths.max()),
        neutral_class=variant.neutral_class if variant.kind == "neutral" else None,
        codebook_digest=cb.digest(),
    )
    model = replace(model, theta=fit_thresholds(model, assigned, train.weight_factor))
    model = replace(model, calibration=fit_calibration(model, plain_H, labels))

    bundle = DetectorBundle(layout, gesturelet, cb, model, m, variant, seed)
    bundle.check()
    preds = [classify_histogram(h, model)[0] for h in plain_H]
    acc = float(np.mean([p == l for p, l in zip(preds, labels)]))
    summary = TrainingSummary(
        model.classes,
        {c: float(t) for c, t in zip(model.classes, model.theta)},
        acc,
        len(seqs),
        int(lengths.sum()),
    )
    log.info("trained %d classes on %d sequences, train accuracy %.3f", len(model.classes), len(seqs), acc)
    return bundle, summary


def sequence_histogram_of(bundle: DetectorBundle, seq: SkeletonSequence) -> np.ndarray:
    M = sequence_matrix(seq, bundle.gesturelet, bundle.layout)
    ids, w = assign_many(M, bundle.codebook, bundle.m)
    return histogram_from_arrays(ids, w, bundle.codebook.K)


def recognize(bundle: DetectorBundle, seq: SkeletonSequence) -> tuple[str, float]:
    return classify_histogram(sequence_histogram_of(bundle, seq), bundle.model)


def recognition_accuracy(bundle: DetectorBundle, sequences: Sequence[SkeletonSequence]) -> float:
    """Fraction of labeled sequences whose whole-sequence histogram is classified correctly."""
    seqs = [s for s in sequences if s.label in bundle.model.classes]
    if not seqs:
        return float("nan")
    hits = [recognize(bundle, s)[0] == s.label for s in seqs]
    return float(np.mean(hits))
