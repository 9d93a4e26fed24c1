"""K-means codebook over gesturelets, soft assignment and sequence histograms."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, TooFewSamples

log = logging.getLogger(__name__)

MAX_ITER = 100
REL_TOL = 1e-4
EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray  # (K, d)
    seed: int
    config_digest: str = ""
    inertia: float = float("nan")
    n_iter: int = 0

    def __post_init__(self):
        C = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] < 2:
            raise ValueError(f"codebook needs K >= 2 centroids, got shape {C.shape}")
        C.setflags(write=False)
        object.__setattr__(self, "centroids", C)
        sq = np.einsum("ij,ij->i", C, C)
        sq.setflags(write=False)
        object.__setattr__(self, "_sqnorms", sq)

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.config_digest.encode())
        h.update(str(self.seed).encode())
        h.update(self.centroids.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    """``m`` (cluster id, weight) pairs, nearest first; weights sum to one."""

    ids: np.ndarray
    weights: np.ndarray

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(w)) for i, w in zip(self.ids, self.weights)]

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, float]]) -> "SoftAssignment":
        ids, weights = zip(*entries)
        return cls(np.asarray(ids, dtype=np.intp), np.asarray(weights, dtype=np.float64))


def _sq_dists(X: np.ndarray, C: np.ndarray, c_sq: np.ndarray) -> np.ndarray:
    """Squared distances (n, K); expanded form, clipped at zero."""
    x_sq = np.einsum("ij,ij->i", X, X)
    D = x_sq[:, None] - 2.0 * (X @ C.T) + c_sq[None, :]
    np.maximum(D, 0.0, out=D)
    return D


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than K was ruled out by the caller
            raise TooFewSamples("k-means++ ran out of distinct points")
        r = rng.random() * total
        pick = int(np.searchsorted(np.cumsum(closest), r, side="right"))
        pick = min(pick, n - 1)
        while closest[pick] == 0:  # never re-pick an existing center
            pick = (pick + 1) % n
        centers[k] = X[pick]
        np.minimum(closest, np.sum((X - centers[k]) ** 2, axis=1), out=closest)
    return centers


def build_codebook(gesturelets: Sequence[np.ndarray] | np.ndarray, K: int, seed: int,
                   config_digest: str = "") -> Codebook:
    """Lloyd k-means with k-means++ seeding.

    Stops after ``MAX_ITER`` iterations or when the relative inertia change
    drops below ``REL_TOL``. Empty clusters are re-seeded at the point
    farthest from its centroid, which keeps the inertia non-increasing.
    """
    X = np.ascontiguousarray(np.asarray(gesturelets, dtype=np.float64))
    if X.ndim != 2:
        raise DimensionMismatch(f"expected (n, d) gesturelets, got shape {X.shape}")
    if K < 2:
        raise ValueError("K must be >= 2")
    n_distinct = len(np.unique(X, axis=0)) if len(X) else 0
    if n_distinct < K:
        raise TooFewSamples(f"{n_distinct} distinct gesturelets for K={K}")

    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, K, rng)
    prev = np.inf
    inertia = np.inf
    it = 0
    for it in range(1, MAX_ITER + 1):
        D = _sq_dists(X, C, np.einsum("ij,ij->i", C, C))
        labels = np.argmin(D, axis=1)
        mind = D[np.arange(len(X)), labels]
        inertia = float(mind.sum())
        assert inertia <= prev * (1 + 1e-9) + 1e-12, "k-means inertia increased"

        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        newC = C.copy()
        nz = counts > 0
        newC[nz] = sums[nz] / counts[nz, None]
        empty = np.flatnonzero(~nz)
        if len(empty):
            far = np.argsort(-mind, kind="stable")
            for k, p in zip(empty, far):
                newC[k] = X[p]
        C = newC
        if np.isfinite(prev) and (prev - inertia) <= REL_TOL * max(prev, 1e-300):
            break
        prev = inertia

    log.debug("k-means K=%d converged after %d iterations, inertia %.6g", K, it, inertia)
    return Codebook(C, seed, config_digest, inertia, it)


def assign(g: np.ndarray, cb: Codebook, m: int) -> SoftAssignment:
    """Soft-assign one gesturelet to its ``m`` nearest centroids.

    Weights are inverse Euclidean distances normalized to sum to one; ties
    in distance go to the lower cluster id.
    """
    g = np.asarray(getattr(g, "vector", g), dtype=np.float64)
    if g.shape != (cb.dim,):
        raise DimensionMismatch(f"gesturelet length {g.shape} != codebook dim {cb.dim}")
    if not 1 <= m <= cb.K:
        raise ValueError(f"m must be in [1, {cb.K}], got {m}")
    diff = cb.centroids - g
    d2 = np.einsum("ij,ij->i", diff, diff)
    if m == 1:
        k = int(np.argmin(d2))
        return SoftAssignment(np.array([k], dtype=np.intp), np.array([1.0]))
    ids = np.argsort(d2, kind="stable")[:m]
    inv = 1.0 / (np.sqrt(d2[ids]) + EPS)
    return SoftAssignment(ids.astype(np.intp), inv / inv.sum())


def assign_many(G: np.ndarray, cb: Codebook, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch form of :func:`assign` returning (ids, weights), each of shape (n, m).

    Uses the expanded distance formula for speed, so near-exact ties may
    resolve differently from :func:`assign`; training uses this, the online
    detector uses :func:`assign`.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2 or G.shape[1] != cb.dim:
        raise DimensionMismatch(f"gesturelets {G.shape} vs codebook dim {cb.dim}")
    if not 1 <= m <= cb.K:
        raise ValueError(f"m must be in [1, {cb.K}], got {m}")
    D = _sq_dists(G, cb.centroids, cb._sqnorms)
    ids = np.argsort(D, axis=1, kind="stable")[:, :m]
    d = np.sqrt(np.take_along_axis(D, ids, axis=1))
    inv = 1.0 / (d + EPS)
    return ids, inv / inv.sum(axis=1, keepdims=True)


def sequence_histogram(assignments: Sequence[SoftAssignment], K: int) -> np.ndarray:
    """L1-normalized accumulation of soft-assignment weights."""
    if len(assignments) == 0:
        raise EmptyInput("no assignments to histogram")
    h = np.zeros(K)
    for a in assignments:
        np.add.at(h, a.ids, a.weights)
    return h / h.sum()


def histogram_from_arrays(ids: np.ndarray, weights: np.ndarray, K: int) -> np.ndarray:
    if len(ids) == 0:
        raise EmptyInput("no assignments to histogram")
    h = np.bincount(np.ravel(ids), weights=np.ravel(weights), minlength=K).astype(np.float64)
    return h / h.sum()
