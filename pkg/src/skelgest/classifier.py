"""One-vs-all linear SVM over sequence histograms, detection thresholds and Platt calibration."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .codebook import SoftAssignment
from .errors import (
    DegenerateLabels,
    DimensionMismatch,
    EmptyScores,
    SingleClassLabels,
    UnknownClass,
)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1e-4           # L2 regularization
    epochs: int = 60
    seed: int = 0
    weight_factor: float = 3.0  # cost of a missed positive relative to a false alarm

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.weight_factor > 0:
            raise ValueError("weight_factor must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class GestureModel:
    """Per-class linear scorer with detection threshold and probability calibration.

    Row ``i`` of ``weights``/``bias``/``theta``/``calibration`` belongs to
    ``classes[i]``. ``calibration[i] = (a, b)`` maps a decision value ``s``
    to ``sigmoid(a * s + b)``.
    """

    classes: tuple[str, ...]
    weights: np.ndarray       # (C, K)
    bias: np.ndarray          # (C,)
    theta: np.ndarray         # (C,)
    calibration: np.ndarray   # (C, 2)
    mean_train_length: float
    max_train_length: int = 0
    neutral_class: str | None = None
    train_config_digest: str = ""
    codebook_digest: str = ""

    def __post_init__(self):
        C = len(self.classes)
        if len(set(self.classes)) != C:
            raise ValueError("duplicate class ids")
        arrays = {
            "weights": np.array(self.weights, dtype=np.float64),
            "bias": np.array(self.bias, dtype=np.float64).reshape(C),
            "theta": np.array(self.theta, dtype=np.float64).reshape(C),
            "calibration": np.array(self.calibration, dtype=np.float64).reshape(C, 2),
        }
        if arrays["weights"].ndim != 2 or arrays["weights"].shape[0] != C:
            raise ValueError("weights must be (C, K)")
        for k, v in arrays.items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)
        if not self.mean_train_length > 0:
            raise ValueError("mean_train_length must be > 0")
        if self.neutral_class is not None and self.neutral_class not in self.classes:
            raise UnknownClass(f"neutral class {self.neutral_class!r} not among {self.classes}")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.classes)})

    @property
    def K(self) -> int:
        return self.weights.shape[1]

    def index(self, c: str) -> int:
        try:
            return self._index[c]
        except KeyError:
            raise UnknownClass(f"class {c!r} not in model {self.classes}") from None

    @property
    def detection_classes(self) -> list[str]:
        return [c for c in self.classes if c != self.neutral_class]

    def decision_values(self, H: np.ndarray) -> np.ndarray:
        """SVM decision values; (C,) for one histogram or (n, C) for a batch."""
        H = np.asarray(H, dtype=np.float64)
        if H.shape[-1] != self.K:
            raise DimensionMismatch(f"histogram length {H.shape[-1]} != K={self.K}")
        return H @ self.weights.T + self.bias

    def probability(self, c: str | int, decision: float) -> float:
        i = c if isinstance(c, (int, np.integer)) else self.index(c)
        a, b = self.calibration[i]
        return _sigmoid(a * decision + b)

    def frame_bias(self) -> np.ndarray:
        """Per-frame share of each class bias."""
        return self.bias / self.mean_train_length


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _objective(W: np.ndarray, Xa: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    margins = Y * (Xa @ W.T)
    return 0.5 * lam * np.sum(W * W, axis=1) + np.maximum(0.0, 1.0 - margins).mean(axis=0)


def train_ovr(histograms: Sequence[np.ndarray] | np.ndarray, labels: Sequence[str],
              cfg: TrainConfig, mean_train_length: float = 1.0,
              classes: Sequence[str] | None = None,
              return_history: bool = False):
    """Train one hinge-loss linear classifier per class against all others.

    Pegasos-style subgradient descent: step ``1/(lam*t)`` on the
    L2-regularized hinge loss, with the bias carried as an extra constant
    input feature. All classes see the same per-epoch sample order, drawn
    from ``cfg.seed``. Thresholds and calibration are left neutral
    (``theta=0``, ``a=1, b=0``); see :func:`fit_thresholds` and
    :func:`fit_calibration`.
    """
    X = np.asarray(histograms, dtype=np.float64)
    labels = [str(l) for l in labels]
    if X.ndim != 2 or len(X) != len(labels):
        raise DimensionMismatch("histograms and labels must align")
    if classes is None:
        classes = sorted(set(labels))
    classes = tuple(classes)
    if len(classes) < 2:
        raise DegenerateLabels(f"need at least 2 classes, got {classes}")
    missing = [c for c in classes if c not in labels]
    if missing:
        raise DegenerateLabels(f"no samples for classes {missing}")

    n, K = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    Y = np.where(np.array(labels)[:, None] == np.array(classes)[None, :], 1.0, -1.0)
    W = np.zeros((len(classes), K + 1))
    lam = cfg.lam
    rng = np.random.default_rng(cfg.seed)
    history = [_objective(W, Xa, Y, lam)]
    t = 0
    for _ in range(cfg.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            x = Xa[i]
            y = Y[i]
            viol = y * (W @ x) < 1.0
            W *= 1.0 - eta * lam
            if viol.any():
                W[viol] += (eta * y[viol])[:, None] * x[None, :]
        history.append(_objective(W, Xa, Y, lam))

    C = len(classes)
    model = GestureModel(
        classes=classes,
        weights=W[:, :K].copy(),
        bias=W[:, K].copy(),
        theta=np.zeros(C),
        calibration=np.tile([1.0, 0.0], (C, 1)),
        mean_train_length=float(mean_train_length),
        train_config_digest=cfg.digest(),
    )
    if return_history:
        return model, np.array(history)
    return model


def frame_score(a: SoftAssignment, model: GestureModel, c: str) -> float:
    """Class score of one frame: weighted cluster weights plus the per-frame bias share."""
    i = model.index(c)
    w = model.weights[i]
    return float(np.dot(a.weights, w[a.ids]) + model.bias[i] / model.mean_train_length)


def frame_scores(ids: np.ndarray, weights: np.ndarray, model: GestureModel) -> np.ndarray:
    """All-class scores for a batch of assignments; ids/weights shaped (n, m). Returns (n, C)."""
    ids = np.atleast_2d(ids)
    weights = np.atleast_2d(weights)
    per = model.weights[:, ids]  # (C, n, m)
    return np.einsum("cnm,nm->nc", per, weights) + model.frame_bias()[None, :]


def threshold_cost(theta: float, pos: np.ndarray, neg: np.ndarray, weight_factor: float) -> float:
    return weight_factor * np.count_nonzero(pos < theta) + np.count_nonzero(neg >= theta)


def learn_threshold(pos_scores: Sequence[float], neg_scores: Sequence[float],
                    weight_factor: float) -> tuple[float, float]:
    """Threshold minimizing ``weight_factor * misses + false_alarms``.

    Candidates are the midpoints between consecutive distinct scores plus
    -inf and +inf; ties go to the lowest threshold. Returns (theta, cost).
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise EmptyScores("both positive and negative scores are required")
    distinct = np.unique(np.concatenate([pos, neg]))
    cands = np.concatenate([[-np.inf], 0.5 * (distinct[:-1] + distinct[1:]), [np.inf]])
    pos_s, neg_s = np.sort(pos), np.sort(neg)
    misses = np.searchsorted(pos_s, cands, side="left")
    alarms = neg_s.size - np.searchsorted(neg_s, cands, side="left")
    cost = weight_factor * misses + alarms
    best = int(np.argmin(cost))  # first minimum = lowest theta
    return float(cands[best]), float(cost[best])


def calibrate(scores: Sequence[float], labels: Sequence[int | bool],
              iterations: int = 100) -> tuple[float, float]:
    """Platt scaling: fit ``P(y=1|s) = sigmoid(a*s + b)`` by Newton's method.

    Uses Platt's smoothed targets, which keeps the fit finite on separable
    scores. Runs a fixed number of Newton iterations with backtracking.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("calibration needs both positive and negative labels")
    t = np.where(y, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(a, b):
        z = a * s + b
        # log(1+exp(z)) - t*z, stable
        return float(np.sum(np.logaddexp(0.0, z) - t * z))

    a, b = 0.0, math.log((n_pos + 1.0) / (n_neg + 1.0))
    f = nll(a, b)
    for _ in range(iterations):
        z = a * s + b
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        g_a = float(np.dot(p - t, s))
        g_b = float(np.sum(p - t))
        q = p * (1.0 - p)
        h_aa = float(np.dot(q, s * s)) + 1e-12
        h_bb = float(np.sum(q)) + 1e-12
        h_ab = float(np.dot(q, s))
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0 or (abs(g_a) < 1e-12 and abs(g_b) < 1e-12):
            continue
        da = -(h_bb * g_a - h_ab * g_b) / det
        db = -(-h_ab * g_a + h_aa * g_b) / det
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = nll(na, nb)
            if nf < f + 1e-4 * step * (g_a * da + g_b * db):
                a, b, f = na, nb, nf
                break
            step *= 0.5
    return a, b


def classify_histogram(h: np.ndarray, model: GestureModel) -> tuple[str, float]:
    dec = model.decision_values(h)
    i = int(np.argmax(dec))
    return model.classes[i], model.probability(i, float(dec[i]))


def with_thresholds(model: GestureModel, theta: Sequence[float]) -> GestureModel:
    return replace(model, theta=np.asarray(theta, dtype=np.float64))


def with_calibration(model: GestureModel, calib: np.ndarray) -> GestureModel:
    return replace(model, calibration=np.asarray(calib, dtype=np.float64))
