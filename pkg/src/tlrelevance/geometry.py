"""Boxes and the detection/ground-truth records that carry them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .errors import ValidationError
from .taxonomy import ArrowClass, TLClass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in center-size convention, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite box coordinates {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"box size must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_xyxy(cls, x1, y1, x2, y2) -> "BBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def xyxy(self) -> Tuple[float, float, float, float]:
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self):
        return [self.cx, self.cy, self.w, self.h]

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def mirrored(self, width: float) -> "BBox":
        return BBox(width - self.cx, self.cy, self.w, self.h)

    def clamped(self, width: float, height: float) -> "BBox":
        """Clip to ``[0, width] x [0, height]``.

        Boxes already inside the image are returned unchanged (no round trip
        through corners, so their coordinates stay bit-exact).
        """
        x1, y1, x2, y2 = self.xyxy()
        if x1 >= 0 and y1 >= 0 and x2 <= width and y2 <= height:
            return self
        x1, x2 = max(x1, 0.0), min(x2, float(width))
        y1, y2 = max(y1, 0.0), min(y2, float(height))
        if x2 <= x1 or y2 <= y1:
            raise ValidationError(f"box {self.as_list()} lies outside the {width}x{height} image")
        return BBox.from_xyxy(x1, y1, x2, y2)


def iou(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.xyxy()
    bx1, by1, bx2, by2 = b.xyxy()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    # corner rounding can push identical boxes a few ulps past 1
    return min(inter / (a.w * a.h + b.w * b.h - inter), 1.0)


def center_deviation(b: BBox, width: float) -> float:
    """Signed horizontal offset of the box center from the image center, as a fraction of width."""
    return b.cx / width - 0.5


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    cls: Union[TLClass, ArrowClass]
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence}")

    @property
    def is_arrow(self) -> bool:
        return isinstance(self.cls, ArrowClass)


@dataclass(frozen=True)
class GroundTruth:
    bbox: BBox
    cls: Union[TLClass, ArrowClass]
    relevant: Optional[bool] = None

    def __post_init__(self):
        if self.relevant is not None and not isinstance(self.cls, ArrowClass):
            raise ValidationError("relevance labels are only allowed on arrow records")

    @property
    def is_arrow(self) -> bool:
        return isinstance(self.cls, ArrowClass)


@dataclass(frozen=True)
class Frame:
    id: str
    width: int
    height: int
    detections: tuple = ()
    ground_truths: tuple = ()
    timestamp_ms: Optional[int] = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"frame {self.id}: dimensions must be positive")

    @property
    def lights(self):
        return [d for d in self.detections if not d.is_arrow]

    @property
    def arrows(self):
        return [d for d in self.detections if d.is_arrow]

    def order_key(self):
        ts = self.timestamp_ms
        return (ts is None, ts if ts is not None else 0, self.id)
