from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelgest.bundle import DetectorBundle, DetectorVariant, gesturelet_digest
from skelgest.classifier import GestureModel
from skelgest.codebook import Codebook, assign, histogram_from_arrays
from skelgest.detector import (
    KadaneState,
    OnlineDetector,
    generate_augmented_histograms,
    kadane_step,
    max_subarray,
    run_stream,
)
from skelgest.errors import ModelMismatch, NonMonotonicTime
from skelgest.features import GestureletConfig, descriptors
from skelgest.metrics import _runs, build_stream, categorize_binary, events_to_timeline
from skelgest.skeleton import OPENPOSE18, SkeletonSequence


def brute_max_subarray(x):
    best = (0.0, None, None)
    for i, j in itertools.combinations_with_replacement(range(len(x)), 2):
        s = float(sum(x[i:j + 1]))
        if s > best[0]:
            best = (s, i, j)
    return best


def stream_kadane(x):
    st_ = KadaneState()
    for t, v in enumerate(x):
        st_ = kadane_step(st_, float(v), t)
    return st_


# -- Kadane -------------------------------------------------------------------

def test_all_negative_never_beats_empty():
    assert max_subarray([-1.0, -3.0, -0.5]) == (0.0, None, None)
    st_ = stream_kadane([-1.0, -3.0])
    assert st_.best_sum == 0.0 and st_.best_span is None


def test_hand_example():
    assert max_subarray([-2, 3, -1, 4, -5]) == (6, 1, 3)
    assert brute_max_subarray([-2, 3, -1, 4, -5]) == (6, 1, 3)
    st_ = stream_kadane([-2, 3, -1, 4, -5])
    assert st_.best_sum == 6 and st_.best_span == (1, 3)


def test_singleton_and_empty_and_all_positive():
    assert max_subarray([2.5]) == (2.5, 0, 0)
    assert max_subarray([]) == (0.0, None, None)
    assert max_subarray([1, 2, 3]) == (6, 0, 2)


def test_time_must_increase():
    st_ = kadane_step(KadaneState(), 1.0, 5)
    with pytest.raises(NonMonotonicTime):
        kadane_step(st_, 1.0, 5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-10, 10), max_size=40))
def test_kadane_matches_enumeration_property(xs):
    x = [v / 4 for v in xs]  # exact binary fractions
    b = brute_max_subarray(x)
    assert max_subarray(x)[0] == b[0]
    st_ = stream_kadane(x)
    assert st_.best_sum == b[0]
    if st_.best_span is not None:
        s, e = st_.best_span
        assert sum(x[s:e + 1]) == b[0]


# -- hand-built bundles ---------------------------------------------------------

CFG = GestureletConfig()


def handmade_bundle(W, bias=None, theta=None, K=None, seed=0, classes=None, variant=None,
                    n_bar=50.0, max_len=60):
    W = np.asarray(W, float)
    C, K = W.shape
    rng = np.random.default_rng(seed)
    cents = rng.normal(size=(K, OPENPOSE18.descriptor_dim))
    cents /= np.linalg.norm(cents, axis=1, keepdims=True)
    cb = Codebook(cents, seed, gesturelet_digest(OPENPOSE18, CFG))
    classes = tuple(classes or [f"c{i}" for i in range(C)])
    model = GestureModel(
        classes, W, np.zeros(C) if bias is None else bias,
        np.full(C, np.inf) if theta is None else theta, np.tile([1.0, 0.0], (C, 1)), n_bar,
        max_train_length=max_len, codebook_digest=cb.digest(),
        neutral_class="neutral" if variant is not None and variant.kind == "neutral" else None,
    )
    return DetectorBundle(OPENPOSE18, CFG, cb, model, 1, variant or DetectorVariant.vanilla(), seed)


def random_frames(seed, n):
    rng = np.random.default_rng(seed)
    base = rng.normal(0, 0.4, (18, 2))
    P = base + np.cumsum(rng.normal(0, 0.08, (n, 18, 2)), axis=0)
    return SkeletonSequence.from_array(P, OPENPOSE18).frames


def offline_scores(bundle, frames):
    """Per-frame class scores computed from the whole sequence at once."""
    P = np.stack([f.joints for f in frames])
    G = descriptors(P, bundle.gesturelet, bundle.layout)
    W, fb = bundle.model.weights, bundle.model.frame_bias()
    rows = []
    for g in G:
        a = assign(g, bundle.codebook, bundle.m)
        rows.append(W[:, a.ids] @ a.weights + fb)
    return np.array(rows)


def replay_vanilla(scores, theta):
    """Reference trigger loop on precomputed scores: (class index, start, end) per firing."""
    C = scores.shape[1]
    states = [KadaneState() for _ in range(C)]
    out = []
    for t, row in enumerate(scores):
        states = [kadane_step(s, float(x), t) for s, x in zip(states, row)]
        margins = [s.best_sum - th if s.best_span is not None and s.best_sum > th else None
                   for s, th in zip(states, theta)]
        live = [(m, -i) for i, m in enumerate(margins) if m is not None]
        if live:
            _, neg_i = max(live)
            i = -neg_i
            out.append((i,) + states[i].best_span)
            states = [KadaneState(last_t=t) for _ in range(C)]
    return out


def test_online_equals_offline_without_firing():
    rng = np.random.default_rng(0)
    bundle = handmade_bundle(rng.normal(size=(3, 10)), bias=rng.normal(size=3))
    frames = random_frames(1, 80)
    det = OnlineDetector(bundle)
    for f in frames:
        assert det.step(f) == []
    assert det.flush() == []
    S = offline_scores(bundle, frames)
    for i, st_ in enumerate(det.kadane):
        assert st_.best_sum == pytest.approx(max_subarray(S[:, i])[0], abs=1e-9)


def test_no_output_before_window_fills():
    bundle = handmade_bundle(np.ones((2, 4)), theta=[0.5, 10.0])
    det = OnlineDetector(bundle)
    frames = random_frames(2, 10)
    assert det.step(frames[0]) == [] and det.step(frames[1]) == []
    assert det.step(frames[2]) == [] and det.step(frames[3]) == []
    ev = det.step(frames[4])  # frames 0..2 are scored now; each alone beats 0.5
    assert [(e.class_id, e.start_frame, e.end_frame) for e in ev] == [("c0", t, t) for t in range(3)]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_events_match_reference_replay(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(0.1, 1.0, size=(3, 8))
    bundle = handmade_bundle(W, theta=rng.uniform(1, 6, 3), seed=seed)
    frames = random_frames(seed, 60)
    got = [(bundle.model.index(e.class_id), e.start_frame, e.end_frame) for e in run_stream(bundle, frames)]
    assert got == replay_vanilla(offline_scores(bundle, frames), bundle.model.theta)


def test_simultaneous_crossing_goes_to_larger_margin():
    W = np.tile([[1.0], [2.0]], (1, 3))  # every cluster: c0 scores 1, c1 scores 2
    frames = random_frames(3, 20)
    b = handmade_bundle(W, theta=[2.5, 4.5])
    ev = run_stream(b, frames)
    assert (ev[0].class_id, ev[0].end_frame) == ("c1", 2)  # margins 0.5 vs 1.5 at frame 2
    b = handmade_bundle(W, theta=[2.1, 5.9])
    ev = run_stream(b, frames)
    assert (ev[0].class_id, ev[0].end_frame) == ("c0", 2)  # margins 0.9 vs 0.1


def test_equal_margins_go_to_lower_class_index():
    W = np.tile([[1.0], [2.0]], (1, 3))
    ev = run_stream(handmade_bundle(W, theta=[2.5, 5.5]), random_frames(4, 10))
    assert ev[0].class_id == "c0"


def test_state_is_cleared_after_every_firing():
    rng = np.random.default_rng(5)
    bundle = handmade_bundle(rng.normal(0.2, 1.0, size=(3, 8)), theta=[2.0, 3.0, 4.0])
    det = OnlineDetector(bundle)
    fired = 0
    for f in random_frames(5, 120):
        if det.step(f):
            fired += 1
            assert all(s.best_sum == 0.0 and s.best_span is None for s in det.kadane)
            assert len(det.assignments) == 0
    assert fired > 0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), s=st.integers(1, 6))
def test_generated_never_fires_before_vanilla(seed, s):
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 1.0, size=(3, 8))
    theta = rng.uniform(0.5, 4, 3)
    frames = random_frames(seed, 80)
    van = run_stream(handmade_bundle(W, theta=theta, seed=seed), frames)
    gen = run_stream(handmade_bundle(W, theta=theta, seed=seed,
                                     variant=DetectorVariant.generated(s=s)), frames)
    if gen:
        assert van and van[0].end_frame <= gen[0].end_frame


def test_generated_waits_for_trailing_non_positive_scores():
    frames = random_frames(6, 30)
    W = np.ones((2, 3))
    b = handmade_bundle(W, theta=[1.5, 100.0], variant=DetectorVariant.generated(s=2))
    # every score is positive, so the trigger condition can never hold
    assert run_stream(b, frames) == []


def test_neutral_firings_are_silent():
    W = np.array([[-1.0] * 4, [1.0] * 4])
    b = handmade_bundle(W, theta=[1.0, 3.0], classes=["waving", "neutral"],
                        variant=DetectorVariant.neutral())
    det = OnlineDetector(b)
    out = []
    for f in random_frames(7, 200):
        out += det.step(f)
    out += det.flush()
    assert out == [] and det.neutral_resets > 10


def test_neutral_variant_needs_neutral_class():
    b = handmade_bundle(np.ones((2, 3)))
    with pytest.raises(ModelMismatch):
        OnlineDetector(b, DetectorVariant.neutral())


def test_buffer_overflow_forces_reset():
    b = handmade_bundle(np.ones((2, 3)), max_len=5)  # bound is 4 * 5 = 20 frames
    det = OnlineDetector(b)
    for f in random_frames(8, 60):
        det.step(f)
    assert det.overflow_resets >= 2
    assert len(det.assignments) <= 20


def test_frames_must_advance():
    det = OnlineDetector(handmade_bundle(np.ones((2, 3))))
    frames = random_frames(9, 3)
    det.step(frames[1])
    with pytest.raises(NonMonotonicTime):
        det.step(frames[0])


def test_event_probability_in_unit_interval(vanilla_bundle, small_data):
    _, test = small_data
    frames, _ = build_stream(test, np.random.default_rng(0))
    ev = run_stream(vanilla_bundle, frames)
    assert ev and all(0.0 <= e.probability <= 1.0 for e in ev)
    assert all(e.class_id in vanilla_bundle.model.detection_classes for e in ev)


# -- trained detector behaviour -----------------------------------------------

def _training_waving(small_data):
    train, _ = small_data
    return [s for s in train if s.label == "waving"]


def test_training_waving_replays_offline_oracle(vanilla_bundle, small_data):
    for seq in _training_waving(small_data):
        ev = run_stream(vanilla_bundle, seq.frames)
        ref = replay_vanilla(offline_scores(vanilla_bundle, seq.frames), vanilla_bundle.model.theta)
        assert [(vanilla_bundle.model.index(e.class_id), e.start_frame, e.end_frame) for e in ev] == ref
        assert ev and {e.class_id for e in ev} == {"waving"}


@pytest.mark.xfail(strict=True, reason="thresholds sit near 0.4 of a gesture's total score and the "
                                       "detector re-fires on the rest of the gesture after a reset")
def test_training_waving_gives_one_event_covering_half(vanilla_bundle, small_data):
    for seq in _training_waving(small_data):
        ev = run_stream(vanilla_bundle, seq.frames)
        assert len(ev) == 1
        assert (ev[0].end_frame - ev[0].start_frame + 1) / len(seq) >= 0.5


def test_neutral_pose_stream_is_silent(neutral_bundle, small_data):
    train, test = small_data
    neutral = [s for s in train + test if s.label == "neutral"]
    frames, _ = build_stream(neutral, np.random.default_rng(1))
    assert run_stream(neutral_bundle, frames) == []


@pytest.mark.xfail(strict=True, reason="re-firing within one gesture block produces more events "
                                       "than gesture blocks even with zero insertions")
def test_neutral_event_count_bounded_by_blocks_plus_insertions(neutral_bundle, small_data):
    _, test = small_data
    gestures = ("waving", "clapping", "bowing")
    for r in range(5):
        frames, gt = build_stream(test, np.random.default_rng(r), "neutral")
        ev = run_stream(neutral_bundle, frames)
        pred = events_to_timeline(gt.length_frames, [(e.class_id, e.start_frame, e.end_frame) for e in ev])
        blocks = sum(1 for c, _, _ in gt.segments if c != "neutral")
        insertions = sum(len(_runs(categorize_binary(gt.binary(c), pred.binary(c)) == "i"))
                         for c in gestures)
        assert len(ev) <= blocks + insertions


# -- augmentation -------------------------------------------------------------

def _assigned(seed, n_seq=6, K=5, m=2):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_seq):
        n = int(rng.integers(4, 12))
        ids = np.stack([rng.choice(K, m, replace=False) for _ in range(n)])
        w = rng.dirichlet(np.ones(m), size=n)
        out.append(("ab"[k % 2], ids, w))
    return out


def test_augmentation_off_is_plain():
    assigned = _assigned(0)
    H, labels = generate_augmented_histograms(assigned, 5, 0, augmentation=False)
    assert labels == [l for l, _, _ in assigned]
    for h, (_, ids, w) in zip(H, assigned):
        assert np.array_equal(h, histogram_from_arrays(ids, w, 5))


def test_augmentation_doubles_and_mixes_by_length():
    assigned = _assigned(1)
    H, labels = generate_augmented_histograms(assigned, 5, 0)
    assert len(H) == 2 * len(assigned)
    for k, (lab, ids, w) in enumerate(assigned):
        mixed = H[2 * k + 1]
        assert labels[2 * k + 1] == lab
        # the mixed histogram is the length-weighted mean of the two parts
        found = False
        for lab_j, ids_j, w_j in assigned:
            if lab_j == lab:
                continue
            n_pre = max(1, int(len(ids_j) * 0.25))
            h_a = histogram_from_arrays(ids, w, 5)
            h_b = histogram_from_arrays(ids_j[:n_pre], w_j[:n_pre], 5)
            expect = (len(ids) * h_a + n_pre * h_b) / (len(ids) + n_pre)
            found |= np.allclose(mixed, expect, atol=1e-12)
        assert found
