"""Everything a detector needs at run time, bound together by content digests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .classifier import GestureModel
from .codebook import Codebook
from .errors import ModelMismatch
from .features import GestureletConfig
from .skeleton import SkeletonLayout

VARIANTS = ("vanilla", "generated", "neutral")


@dataclass(frozen=True)
class DetectorVariant:
    """Trigger rule of the online detector.

    ``vanilla`` fires as soon as a class's best subarray score exceeds its
    threshold. ``generated`` additionally waits for ``s`` consecutive
    non-positive frame scores of that class (and, when ``augmentation`` is
    on, the model was trained on mixed histograms). ``neutral`` uses a model
    trained with ``neutral_class``; firings of that class silently reset the
    detector.
    """

    kind: str = "vanilla"
    s: int = 5
    augmentation: bool = True
    neutral_class: str = "neutral"

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.kind!r}")
        if self.s < 1:
            raise ValueError("s must be >= 1")

    @classmethod
    def vanilla(cls) -> "DetectorVariant":
        return cls("vanilla")

    @classmethod
    def generated(cls, s: int = 5, augmentation: bool = True) -> "DetectorVariant":
        return cls("generated", s=s, augmentation=augmentation)

    @classmethod
    def neutral(cls, neutral_class: str = "neutral") -> "DetectorVariant":
        return cls("neutral", neutral_class=neutral_class)

    def to_dict(self) -> dict:
        return asdict(self)


def gesturelet_digest(layout: SkeletonLayout, cfg: GestureletConfig) -> str:
    blob = json.dumps({"layout": layout.to_dict(), "gesturelet": cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class DetectorBundle:
    layout: SkeletonLayout
    gesturelet: GestureletConfig
    codebook: Codebook
    model: GestureModel
    m: int = 2
    variant: DetectorVariant = field(default_factory=DetectorVariant)
    seed: int = 0

    def check(self) -> None:
        """Raise :class:`ModelMismatch` unless all parts belong together."""
        expected = gesturelet_digest(self.layout, self.gesturelet)
        if self.codebook.config_digest != expected:
            raise ModelMismatch("codebook was built for a different layout or gesturelet config")
        if self.codebook.dim != self.layout.descriptor_dim:
            raise ModelMismatch(
                f"codebook dim {self.codebook.dim} != descriptor dim {self.layout.descriptor_dim}"
            )
        if self.model.codebook_digest != self.codebook.digest():
            raise ModelMismatch("gesture model was trained on a different codebook")
        if self.model.K != self.codebook.K:
            raise ModelMismatch(f"model K={self.model.K} != codebook K={self.codebook.K}")
        if not 1 <= self.m <= self.codebook.K:
            raise ModelMismatch(f"m={self.m} outside [1, K]")
        if self.variant.kind == "neutral" and self.variant.neutral_class not in self.model.classes:
            raise ModelMismatch(
                f"neutral variant needs class {self.variant.neutral_class!r} in the model"
            )
