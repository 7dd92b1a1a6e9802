"""Axis-aligned boxes and the overlap measures used to price matches.

Boxes use a center-size parameterization ``(cx, cy, w, h)`` in normalized
image coordinates: centers inside the unit square, strictly positive sides.
Corner form is derived on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with center ``(cx, cy)`` in [0, 1] and positive sides."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "w", "h"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"BBox.{name} must be a finite number, got {value!r}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(
                f"BBox center must lie in the unit square, got ({self.cx}, {self.cy})"
            )
        if self.w <= 0.0 or self.h <= 0.0:
            raise ValueError(f"BBox sides must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """Return ``(x_min, y_min, x_max, y_max)``."""
        return (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )

    def translated(self, dx: float, dy: float) -> "BBox":
        """Box shifted by ``(dx, dy)``; the result must stay a valid box."""
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)


def _overlap_terms(a: BBox, b: BBox) -> tuple[float, float]:
    """Intersection and union areas, all derived from corner coordinates.

    Using corner differences for the box areas as well keeps every term on
    one rounding path: a box against itself gives intersection == union
    exactly, and ordered operands keep intersection <= union always, so the
    ratio never leaves [0, 1].
    """
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    a_area = (ax1 - ax0) * (ay1 - ay0)
    b_area = (bx1 - bx0) * (by1 - by0)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    return inter, a_area + b_area - inter


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; 0 for disjoint, 1 for identical boxes."""
    inter, union = _overlap_terms(a, b)
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU in [-1, 1].

    Subtracts from plain IoU the fraction of the smallest enclosing box not
    covered by the union, so far-apart boxes are penalized even at zero
    overlap.  Equals IoU whenever the union fills the enclosing box.
    """
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    inter, union = _overlap_terms(a, b)
    enclose = (max(ax1, bx1) - min(ax0, bx0)) * (max(ay1, by1) - min(ay0, by0))
    return inter / union - (enclose - union) / enclose


def giou_rescaled(a: BBox, b: BBox) -> float:
    """Affine map of :func:`giou` onto [0, 1]: ``(giou + 1) / 2``.

    Convenient as a similarity score for displays and summary tables.
    """
    return 0.5 * (giou(a, b) + 1.0)


def l1_box_distance(a: BBox, b: BBox) -> float:
    """Sum of absolute coordinate differences in center-size form."""
    return (
        abs(a.cx - b.cx) + abs(a.cy - b.cy) + abs(a.w - b.w) + abs(a.h - b.h)
    )
