"""Axis-aligned box geometry in corner form ``(x1, y1, x2, y2)``."""

from __future__ import annotations

Box = tuple[float, float, float, float]


class BoxError(ValueError):
    pass


def check_box(b) -> Box:
    x1, y1, x2, y2 = (float(v) for v in b)
    if not (x2 > x1 and y2 > y1):
        raise BoxError(f"degenerate box {tuple(b)}: needs x2 > x1 and y2 > y1")
    return (x1, y1, x2, y2)


def area(b: Box) -> float:
    x1, y1, x2, y2 = b
    return (x2 - x1) * (y2 - y1)


def intersection_area(a: Box, b: Box) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a, b) -> float:
    """Intersection over union, in [0, 1]."""
    a, b = check_box(a), check_box(b)
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    return inter / union


def giou(a, b) -> float:
    """Generalized IoU: IoU minus the empty fraction of the enclosing box.

    Range (-1, 1]; equals IoU when the enclosing box is exactly covered by
    the union (e.g. identical boxes).
    """
    a, b = check_box(a), check_box(b)
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    enclosing = (max(a[2], b[2]) - min(a[0], b[0])) * (max(a[3], b[3]) - min(a[1], b[1]))
    return inter / union - (enclosing - union) / enclosing


def cxcywh_to_xyxy(b) -> Box:
    cx, cy, bw, bh = (float(v) for v in b)
    return (cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0)


def xyxy_to_cxcywh(b) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (float(v) for v in b)
    return ((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
