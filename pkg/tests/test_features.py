from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelgest.errors import EmptySequence, OutOfRange
from skelgest.features import (
    GestureletConfig,
    descriptors,
    extract_gesturelet,
    extract_sequence,
    finite_differences,
    gesturelet_blocks,
    joint_angles,
    joint_kinematics,
    sequence_matrix,
)
from skelgest.skeleton import OPENPOSE18, SkeletonSequence

CFG = GestureletConfig()


def random_poses(rng, n, J=18, D=2):
    base = rng.normal(0, 0.4, (J, D))
    drift = np.cumsum(rng.normal(0, 0.05, (n, J, D)), axis=0)
    return base + drift


def test_finite_difference_hand_values():
    X = np.array([[0.0], [1.0], [4.0]])
    V, A = finite_differences(X, lag=1, idx=np.array([1]))
    assert V[0, 0] == 2.0 and A[0, 0] == 2.0


def test_first_frame_uses_one_sided_velocity():
    X = np.array([[0.0], [1.0], [4.0]])
    V, _ = finite_differences(X, lag=1, idx=np.array([0]))
    assert V[0, 0] == 1.0


def test_constant_signal_has_zero_kinematics():
    X = np.tile(np.array([[1.0, 2.0], [3.0, -1.0]]), (5, 1, 1))
    V, A = finite_differences(X, lag=2)
    assert not V.any() and not A.any()


def test_interior_half_span_shrinks_near_edges():
    X = np.arange(6, dtype=float) ** 2
    V, A = finite_differences(X, lag=2, idx=np.array([1, 2]))
    assert V.tolist() == [(4 - 0) / 2, (16 - 0) / 4]
    assert A.tolist() == [2.0, 2.0]


def test_straight_limb_angle_is_pi():
    J = np.array([[0.0, 0], [1, 0], [2, 0]])
    assert joint_angles(J, _tri_layout()) == pytest.approx([math.pi])


def test_right_angle():
    J = np.array([[0.0, 1], [0, 0], [1, 0]])
    assert joint_angles(J, _tri_layout()) == pytest.approx([math.pi / 2])


def test_zero_length_bone_gives_flagged_zero():
    J = np.array([[0.0, 0], [0, 0], [1, 0]])
    theta, flag = joint_angles(J, _tri_layout(), return_flags=True)
    assert theta[0] == 0.0 and flag[0]


def _tri_layout():
    from skelgest.skeleton import SkeletonLayout

    return SkeletonLayout("tri", ("a", "b", "c"), 1, ((0, 1, 2),), (0.1, 0.1, 0.1), 2)


def test_block_weights_applied_exactly():
    rng = np.random.default_rng(0)
    P = random_poses(rng, 9)
    unit = gesturelet_blocks(P, GestureletConfig(1.0, 1.0, 1.0), OPENPOSE18)
    w = gesturelet_blocks(P, GestureletConfig(0.8, 0.4, 1.0), OPENPOSE18)
    assert np.array_equal(w["position"], unit["position"])
    assert np.allclose(w["velocity"], 0.8 * unit["velocity"], rtol=1e-15, atol=0)
    assert np.allclose(w["acceleration"], 0.4 * unit["acceleration"], rtol=1e-15, atol=0)
    assert np.array_equal(w["angle_speed"], unit["angle_speed"])


def test_stationary_sequence_is_pure_position():
    rng = np.random.default_rng(1)
    P = np.tile(random_poses(rng, 1), (6, 1, 1))
    G = descriptors(P, CFG, OPENPOSE18)
    d = 2 * 18
    assert not G[:, d:].any()
    rel = P[0] - 0.5 * (P[0, 8] + P[0, 11])
    expected = rel.ravel() / np.linalg.norm(rel)
    assert np.allclose(G[:, :d], expected[None, :], atol=1e-12)


def test_one_frame_sequence():
    seq = SkeletonSequence.from_array(random_poses(np.random.default_rng(2), 1), OPENPOSE18)
    out = extract_sequence(seq, CFG, OPENPOSE18)
    assert len(out) == 1
    assert not out[0].vector[36:].any()


def test_cardinality_and_indices():
    seq = SkeletonSequence.from_array(random_poses(np.random.default_rng(3), 11), OPENPOSE18)
    out = extract_sequence(seq, CFG, OPENPOSE18)
    assert [g.frame_index for g in out] == list(range(11))


def test_single_frame_extraction_matches_batch():
    seq = SkeletonSequence.from_array(random_poses(np.random.default_rng(4), 20), OPENPOSE18)
    M = sequence_matrix(seq, CFG, OPENPOSE18)
    for t in range(len(seq)):
        assert np.array_equal(extract_gesturelet(seq, t, CFG, OPENPOSE18).vector, M[t])


def test_windowed_descriptor_matches_full_sequence_inside():
    # frames at least `lag` away from both ends only see a 2*lag+1 window
    P = random_poses(np.random.default_rng(5), 30)
    full = descriptors(P, CFG, OPENPOSE18)
    lag = CFG.lag
    for t in range(lag, 30 - lag):
        win = descriptors(P[t - lag:t + lag + 1], CFG, OPENPOSE18, np.array([lag]))[0]
        assert np.allclose(win, full[t], rtol=0, atol=1e-14)


def test_errors():
    empty = SkeletonSequence("openpose18", ())
    with pytest.raises(EmptySequence):
        extract_sequence(empty, CFG, OPENPOSE18)
    seq = SkeletonSequence.from_array(random_poses(np.random.default_rng(6), 3), OPENPOSE18)
    with pytest.raises(OutOfRange):
        joint_kinematics(seq, 3, 2)
    with pytest.raises(ValueError):
        GestureletConfig(alpha=-1)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12))
def test_unit_norm_property(seed, n):
    G = descriptors(random_poses(np.random.default_rng(seed), n), CFG, OPENPOSE18)
    assert np.allclose(np.linalg.norm(G, axis=1), 1.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.sampled_from([0.1, 3.0, 100.0]),
       shift=st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
def test_similarity_invariance_property(seed, k, shift):
    P = random_poses(np.random.default_rng(seed), 8)
    G = descriptors(P, CFG, OPENPOSE18)
    assert np.max(np.abs(descriptors(k * P, CFG, OPENPOSE18) - G)) < 1e-6
    assert np.max(np.abs(descriptors(P + np.array(shift), CFG, OPENPOSE18) - G)) < 1e-6
