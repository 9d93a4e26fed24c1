from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelgest.classifier import (
    GestureModel,
    TrainConfig,
    calibrate,
    classify_histogram,
    frame_score,
    frame_scores,
    learn_threshold,
    threshold_cost,
    train_ovr,
)
from skelgest.codebook import SoftAssignment
from skelgest.errors import DegenerateLabels, EmptyScores, SingleClassLabels, UnknownClass


def _model(W, b, n_bar=1.0, classes=None):
    W = np.asarray(W, float)
    C = W.shape[0]
    return GestureModel(tuple(classes or [f"c{i}" for i in range(C)]), W, b, np.zeros(C),
                        np.tile([1.0, 0.0], (C, 1)), n_bar)


def test_axis_separable_two_classes():
    H = np.array([[1.0, 0.0]] * 5 + [[0.0, 1.0]] * 5)
    labels = ["a"] * 5 + ["b"] * 5
    m = train_ovr(H, labels, TrainConfig(lam=1e-3, epochs=40))
    w0, b0 = m.weights[0], m.bias[0]
    assert np.dot(w0, [1, 0]) + b0 > 0
    assert np.dot(w0, [0, 1]) + b0 < 0


def test_training_is_deterministic():
    rng = np.random.default_rng(0)
    H = rng.dirichlet(np.ones(6), size=30)
    labels = [str(i % 3) for i in range(30)]
    a = train_ovr(H, labels, TrainConfig(seed=4))
    b = train_ovr(H, labels, TrainConfig(seed=4))
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias.tobytes() == b.bias.tobytes()


def test_training_reduces_objective():
    rng = np.random.default_rng(1)
    H = rng.dirichlet(np.ones(5), size=40)
    labels = [str(int(h.argmax() > 2)) for h in H]
    _, hist = train_ovr(H, labels, TrainConfig(), return_history=True)
    assert (hist[-1] < hist[0]).all()


def test_training_needs_two_classes():
    with pytest.raises(DegenerateLabels):
        train_ovr(np.eye(3), ["a", "a", "a"], TrainConfig())


def test_null_model_scores_zero():
    m = _model(np.zeros((2, 3)), [0.0, 0.0])
    a = SoftAssignment.from_entries([(1, 0.6), (2, 0.4)])
    assert frame_score(a, m, "c0") == 0.0


def test_hard_assignment_score_is_weight_plus_bias_share():
    m = _model([[0.5, -1.0, 2.0], [0.0, 0.0, 0.0]], [3.0, 0.0], n_bar=12.0)
    a = SoftAssignment.from_entries([(2, 1.0)])
    assert frame_score(a, m, "c0") == 2.0 + 3.0 / 12.0


def test_soft_assignment_score():
    m = _model([[2.0, -2.0], [0.0, 0.0]], [0.0, 0.0])
    a = SoftAssignment.from_entries([(0, 0.75), (1, 0.25)])
    assert frame_score(a, m, "c0") == pytest.approx(1.0)
    S = frame_scores(a.ids[None, :], a.weights[None, :], m)
    assert S[0, 0] == pytest.approx(1.0)


def test_unknown_class():
    with pytest.raises(UnknownClass):
        _model(np.zeros((2, 2)), [0, 0]).index("zzz")


def test_threshold_hand_example():
    theta, cost = learn_threshold([2.0, 3.0], [1.0, 2.5], 3.0)
    assert theta == 1.5 and cost == 1.0


def test_threshold_separable_midpoint():
    assert learn_threshold([5.0], [1.0], 3.0) == (3.0, 0.0)


def test_threshold_needs_both_sides():
    with pytest.raises(EmptyScores):
        learn_threshold([], [1.0], 3.0)


@settings(max_examples=100, deadline=None)
@given(pos=st.lists(st.integers(-20, 20), min_size=1, max_size=12),
       neg=st.lists(st.integers(-20, 20), min_size=1, max_size=12),
       wf=st.sampled_from([0.5, 1.0, 3.0]))
def test_threshold_is_exhaustive_minimum(pos, neg, wf):
    pos, neg = np.array(pos, float) / 2, np.array(neg, float) / 2
    theta, cost = learn_threshold(pos, neg, wf)
    grid = np.arange(-12.0, 12.0, 0.125)  # finer than the half-integer scores
    brute = min(threshold_cost(t, pos, neg, wf) for t in grid)
    assert cost == brute == threshold_cost(theta, pos, neg, wf)


def test_symmetric_calibration_is_half_at_zero():
    s = np.array([-1.0, 1.0] * 50)
    y = s > 0
    a, b = calibrate(s, y)
    assert abs(1 / (1 + math.exp(-b)) - 0.5) < 0.01


def test_calibration_limits():
    m = _model(np.zeros((2, 2)), [0, 0])
    m = GestureModel(m.classes, m.weights, m.bias, m.theta, [[2.0, 0.1], [2.0, 0.1]], 1.0)
    assert m.probability(0, 1e6) == 1.0
    assert m.probability(0, -1e6) == 0.0


@pytest.mark.parametrize("a_true,b_true", [(2.0, -0.5), (1.0, 0.3), (3.0, 1.0)])
def test_calibration_recovers_known_sigmoid(a_true, b_true):
    # 100 score levels x 100 samples; each level gets exactly round(100 * p) positives,
    # so label noise does not swamp the 5% tolerance
    grid = np.linspace(-3, 3, 100)
    s = np.repeat(grid, 100)
    k = np.round(100 / (1 + np.exp(-(a_true * grid + b_true)))).astype(int)
    y = np.concatenate([np.arange(100) < kk for kk in k])
    a, b = calibrate(s, y)
    assert abs(a - a_true) / abs(a_true) < 0.05
    assert abs(b - b_true) / abs(b_true) < 0.05


def test_calibration_matches_unregularized_fit_on_noisy_labels():
    from scipy.optimize import minimize

    rng = np.random.default_rng(7)
    s = rng.normal(0, 1.5, 10_000)
    y = rng.random(10_000) < 1 / (1 + np.exp(-(2.0 * s - 0.5)))
    mle = minimize(lambda p: np.sum(np.logaddexp(0, p[0] * s + p[1]) - y * (p[0] * s + p[1])), [0, 0]).x
    assert calibrate(s, y) == pytest.approx(tuple(mle), abs=0.01)


def test_calibration_needs_both_labels():
    with pytest.raises(SingleClassLabels):
        calibrate([1.0, 2.0], [True, True])


def test_memorized_exemplar_is_recognized():
    H = np.eye(4)
    labels = ["a", "b", "c", "d"]
    m = train_ovr(H, labels, TrainConfig(lam=1e-3, epochs=80))
    for h, lab in zip(H, labels):
        assert classify_histogram(h, m)[0] == lab


def test_uniform_histogram_on_symmetric_model():
    m = GestureModel(("a", "b"), [[1.0, -1.0], [-1.0, 1.0]], [0.0, 0.0], [0.0, 0.0],
                     [[1.5, 0.0], [1.5, 0.0]], 1.0)
    _, p = classify_histogram(np.array([0.5, 0.5]), m)
    assert p == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-5, 5))
def test_argmax_invariant_to_common_weight_shift(seed, shift):
    rng = np.random.default_rng(seed)
    W, b = rng.normal(size=(4, 6)), rng.normal(size=4)
    h = rng.dirichlet(np.ones(6))
    c = rng.normal(size=6) * shift
    before = classify_histogram(h, _model(W, b))[0]
    after = classify_histogram(h, _model(W + c, b))[0]
    assert before == after
