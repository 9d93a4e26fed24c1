"""Per-frame gesturelet descriptors from skeleton sequences.

A gesturelet concatenates hip-relative joint positions, their velocity and
acceleration, and the angular speed of a few joint angles, then scales the
result to unit L2 norm. Positions, velocity and acceleration are expressed
in units of the current pose's hip-relative extent, which makes the whole
descriptor scale-free (angles already are).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptySequence, OutOfRange
from .skeleton import SkeletonFrame, SkeletonLayout, SkeletonSequence, hip_center


@dataclass(frozen=True)
class GestureletConfig:
    alpha: float = 0.8  # velocity weight
    beta: float = 0.4   # acceleration weight
    gamma: float = 1.0  # angle-speed weight
    lag: int = 2        # finite-difference half window, in frames

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if int(self.lag) != self.lag or self.lag < 1:
            raise ValueError(f"lag must be a positive integer, got {self.lag}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Gesturelet:
    frame_index: int
    vector: np.ndarray


def finite_differences(X: np.ndarray, lag: int, idx: np.ndarray | None = None):
    """Velocity and acceleration of ``X`` (shape (n, ...)) along axis 0.

    Interior frames use symmetric differences with half-span
    ``h = min(lag, t, n-1-t)``. The first and last frame have no symmetric
    neighbour and use one-sided differences with span ``min(lag, n-1)``
    (velocity) and ``min(lag, (n-1)//2)`` (acceleration). Units are per
    frame and per frame squared.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    idx = np.arange(n) if idx is None else np.asarray(idx, dtype=np.intp)
    V = np.zeros((len(idx),) + X.shape[1:])
    A = np.zeros_like(V)
    if n <= 1 or len(idx) == 0:
        return V, A

    h = np.minimum(np.minimum(lag, idx), n - 1 - idx)
    inner = h >= 1
    if inner.any():
        t, hh = idx[inner], h[inner]
        shape = (-1,) + (1,) * (X.ndim - 1)
        hb = hh.reshape(shape).astype(np.float64)
        fwd, back = X[t + hh], X[t - hh]
        V[inner] = (fwd - back) / (2.0 * hb)
        A[inner] = (fwd + back - 2.0 * X[t]) / (hb * hb)

    h1 = min(lag, n - 1)
    h2 = min(lag, (n - 1) // 2)
    for k in np.flatnonzero(~inner):
        t = idx[k]
        if t == 0:
            V[k] = (X[h1] - X[0]) / h1
            if h2 >= 1:
                A[k] = (X[2 * h2] - 2.0 * X[h2] + X[0]) / (h2 * h2)
        else:
            V[k] = (X[n - 1] - X[n - 1 - h1]) / h1
            if h2 >= 1:
                A[k] = (X[n - 1] - 2.0 * X[n - 1 - h2] + X[n - 1 - 2 * h2]) / (h2 * h2)
    return V, A


def _check_t(n: int, t: int):
    if n == 0:
        raise EmptySequence("sequence has no frames")
    if not 0 <= t < n:
        raise OutOfRange(f"frame {t} outside [0, {n})")


def joint_kinematics(seq: SkeletonSequence, t: int, lag: int):
    """Hip-relative positions, velocity and acceleration at frame ``t``, each flattened to D*J."""
    poses = seq.poses()
    _check_t(len(poses), t)
    rel = poses - hip_center(poses, seq.layout)[:, None, :]
    V, A = finite_differences(rel, lag, np.array([t]))
    return rel[t].ravel(), V[0].ravel(), A[0].ravel()


def joint_angles(frame: SkeletonFrame | np.ndarray, layout: SkeletonLayout,
                 return_flags: bool = False):
    """Angle at each triplet's vertex, in [0, pi].

    A zero-length bone gives angle 0 and sets the degeneracy flag. Accepts a
    frame or a joint array of shape (J, D) or (N, J, D).
    """
    joints = frame.joints if isinstance(frame, SkeletonFrame) else np.asarray(frame, dtype=np.float64)
    tri = np.asarray(layout.angle_triplets)
    u = joints[..., tri[:, 0], :] - joints[..., tri[:, 1], :]
    v = joints[..., tri[:, 2], :] - joints[..., tri[:, 1], :]
    dot = np.sum(u * v, axis=-1)
    if joints.shape[-1] == 2:
        cross = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
    else:
        cross = np.linalg.norm(np.cross(u, v), axis=-1)
    degenerate = (np.sum(u * u, axis=-1) == 0) | (np.sum(v * v, axis=-1) == 0)
    theta = np.where(degenerate, 0.0, np.arctan2(cross, dot))
    if return_flags:
        return theta, degenerate
    return theta


def gesturelet_blocks(poses: np.ndarray, cfg: GestureletConfig, layout: SkeletonLayout,
                      idx: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Weighted, unnormalized descriptor blocks for frames ``idx`` of ``poses`` (N, J, D)."""
    poses = np.asarray(poses, dtype=np.float64)
    n = poses.shape[0]
    idx = np.arange(n) if idx is None else np.asarray(idx, dtype=np.intp)
    rel = poses - hip_center(poses, layout)[:, None, :]
    V, A = finite_differences(rel, cfg.lag, idx)
    theta = joint_angles(poses, layout)
    dtheta, _ = finite_differences(theta, cfg.lag, idx)

    P = rel[idx].reshape(len(idx), -1)
    scale = np.linalg.norm(P, axis=1)
    scale[scale == 0] = 1.0
    scale = scale[:, None]
    return {
        "position": P / scale,
        "velocity": cfg.alpha * V.reshape(len(idx), -1) / scale,
        "acceleration": cfg.beta * A.reshape(len(idx), -1) / scale,
        "angle_speed": cfg.gamma * dtheta,
    }


def descriptors(poses: np.ndarray, cfg: GestureletConfig, layout: SkeletonLayout,
                idx: np.ndarray | None = None) -> np.ndarray:
    """Unit-norm gesturelet vectors, one row per frame in ``idx``.

    ``poses`` is treated as the complete sequence: its first and last rows
    are the boundaries for the finite differences.
    """
    b = gesturelet_blocks(poses, cfg, layout, idx)
    G = np.concatenate([b["position"], b["velocity"], b["acceleration"], b["angle_speed"]], axis=1)
    norms = np.linalg.norm(G, axis=1)
    nz = norms > 0
    G[nz] /= norms[nz, None]
    G[~nz] = 0.0
    return G


def extract_gesturelet(seq: SkeletonSequence, t: int, cfg: GestureletConfig,
                       layout: SkeletonLayout) -> Gesturelet:
    poses = seq.poses()
    _check_t(len(poses), t)
    vec = descriptors(poses, cfg, layout, np.array([t]))[0]
    return Gesturelet(seq.frames[t].frame_index, vec)


def extract_sequence(seq: SkeletonSequence, cfg: GestureletConfig,
                     layout: SkeletonLayout) -> list[Gesturelet]:
    if len(seq) == 0:
        raise EmptySequence(f"sequence {seq.source_id or ''} has no frames".strip())
    G = descriptors(seq.poses(), cfg, layout)
    return [Gesturelet(f.frame_index, g) for f, g in zip(seq.frames, G)]


def sequence_matrix(seq: SkeletonSequence, cfg: GestureletConfig, layout: SkeletonLayout) -> np.ndarray:
    """Same as :func:`extract_sequence` but returns the (N, d) array directly."""
    if len(seq) == 0:
        raise EmptySequence(f"sequence {seq.source_id or ''} has no frames".strip())
    return descriptors(seq.poses(), cfg, layout)
