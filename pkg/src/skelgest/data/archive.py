"""Single-file model archive: JSON with base64 float64 arrays and content digests.

Output is canonical (sorted keys, fixed array encoding), so saving the same
bundle twice gives byte-identical files and arrays load back bit for bit.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from ..bundle import DetectorBundle, DetectorVariant
from ..classifier import GestureModel
from ..codebook import Codebook
from ..errors import DigestMismatch, ParseError, VersionUnsupported
from ..features import GestureletConfig
from ..skeleton import SkeletonLayout

FORMAT_VERSION = 1


def _enc(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "float64", "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    try:
        if d["dtype"] != "float64":
            raise ValueError(f"unsupported dtype {d['dtype']}")
        raw = base64.b64decode(d["data"], validate=True)
        return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad array entry: {exc}") from None


def _float(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def model_digest(model: GestureModel) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([list(model.classes), model.mean_train_length, model.max_train_length,
                         model.neutral_class, model.train_config_digest, model.codebook_digest]).encode())
    for a in (model.weights, model.bias, model.theta, model.calibration):
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


def bundle_to_dict(bundle: DetectorBundle) -> dict:
    cb, model = bundle.codebook, bundle.model
    body = {
        "layout": bundle.layout.to_dict(),
        "gesturelet": bundle.gesturelet.to_dict(),
        "codebook": {
            "centroids": _enc(cb.centroids),
            "seed": int(cb.seed),
            "config_digest": cb.config_digest,
            "inertia": _float(cb.inertia),
            "n_iter": int(cb.n_iter),
        },
        "model": {
            "classes": list(model.classes),
            "weights": _enc(model.weights),
            "bias": _enc(model.bias),
            "theta": _enc(model.theta),
            "calibration": _enc(model.calibration),
            "mean_train_length": float(model.mean_train_length),
            "max_train_length": int(model.max_train_length),
            "neutral_class": model.neutral_class,
            "train_config_digest": model.train_config_digest,
            "codebook_digest": model.codebook_digest,
        },
        "m": int(bundle.m),
        "variant": bundle.variant.to_dict(),
        "seed": int(bundle.seed),
    }
    digests = {
        "codebook": cb.digest(),
        "model": model_digest(model),
        "content": _sha(body),
    }
    return {"format_version": FORMAT_VERSION, **body, "digests": digests}


def dumps(bundle: DetectorBundle) -> str:
    bundle.check()
    return json.dumps(bundle_to_dict(bundle), sort_keys=True, indent=1) + "\n"


def loads(text: str) -> DetectorBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model archive is not valid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("model archive must be a JSON object")
    version = doc.get("format_version")
    if isinstance(version, bool) or not isinstance(version, int):
        raise VersionUnsupported(f"missing or non-integer format_version: {version!r}")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"archive format_version {version}, this build reads {FORMAT_VERSION}")
    try:
        digests = doc["digests"]
        body = {k: v for k, v in doc.items() if k not in ("format_version", "digests")}
        if _sha(body) != digests["content"]:
            raise DigestMismatch("archive content does not match its digest")
        layout = SkeletonLayout.from_dict(body["layout"])
        gesturelet = GestureletConfig(**body["gesturelet"])
        c = body["codebook"]
        inertia = float("nan") if c["inertia"] is None else float(c["inertia"])
        cb = Codebook(_dec(c["centroids"]), int(c["seed"]), c["config_digest"], inertia, int(c["n_iter"]))
        mm = body["model"]
        model = GestureModel(
            classes=tuple(mm["classes"]),
            weights=_dec(mm["weights"]),
            bias=_dec(mm["bias"]),
            theta=_dec(mm["theta"]),
            calibration=_dec(mm["calibration"]),
            mean_train_length=float(mm["mean_train_length"]),
            max_train_length=int(mm["max_train_length"]),
            neutral_class=mm["neutral_class"],
            train_config_digest=mm["train_config_digest"],
            codebook_digest=mm["codebook_digest"],
        )
        variant = DetectorVariant(**body["variant"])
        bundle = DetectorBundle(layout, gesturelet, cb, model, int(body["m"]), variant, int(body["seed"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"model archive is missing or has a malformed field: {exc}") from None
    if cb.digest() != digests.get("codebook"):
        raise DigestMismatch("codebook digest mismatch")
    if model_digest(model) != digests.get("model"):
        raise DigestMismatch("model digest mismatch")
    if model.codebook_digest != cb.digest():
        raise DigestMismatch("gesture model and codebook come from different training runs")
    bundle.check()
    return bundle


def save_model(bundle: DetectorBundle, path: str | os.PathLike) -> None:
    Path(path).write_text(dumps(bundle), encoding="utf-8")


def load_model(path: str | os.PathLike) -> DetectorBundle:
    return loads(Path(path).read_text(encoding="utf-8"))
