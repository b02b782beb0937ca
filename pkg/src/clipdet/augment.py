"""Frame augmentations that keep ground-truth boxes consistent.

Every call draws its random parameters once and applies the identical
transform to all frames it is given, so the three frames of a clip stay
aligned. Geometric kinds transform boxes when boxes are passed; pepper
noise reuses one pixel mask across frames.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .boxes import Box

KINDS = (
    "none",
    "horizontal_flip",
    "vertical_flip",
    "random_crop",
    "center_crop",
    "resize",
    "random_rotation",
    "random_pepper",
)


class AugmentError(ValueError):
    pass


def _bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at float coordinates; points outside the frame read 0."""
    h, w = img.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = ys - y0
    wx = xs - x0
    out = np.zeros(ys.shape)
    for dy, dx, wgt in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        yi = y0 + dy
        xi = x0 + dx
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        vals = np.where(valid, img[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0.0)
        out += wgt * vals
    return out


def _resize_to(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _bilinear(img, yy, xx)


def crop_frames(frames: Sequence[np.ndarray], oy: int, ox: int, ch: int, cw: int) -> list[np.ndarray]:
    h, w = frames[0].shape
    if ch > h or cw > w:
        raise AugmentError(f"crop {ch}x{cw} larger than frame {h}x{w}")
    if oy < 0 or ox < 0 or oy + ch > h or ox + cw > w:
        raise AugmentError(f"crop window ({oy},{ox},{ch},{cw}) outside {h}x{w} frame")
    return [f[oy:oy + ch, ox:ox + cw] for f in frames]


def _clip_box(b, h: int, w: int) -> Box:
    x1 = min(max(b[0], 0.0), w)
    y1 = min(max(b[1], 0.0), h)
    x2 = min(max(b[2], 0.0), w)
    y2 = min(max(b[3], 0.0), h)
    if not (x2 > x1 and y2 > y1):
        raise AugmentError(f"augmentation degenerated box {tuple(b)}")
    return (x1, y1, x2, y2)


def _crop_and_restore(frames, boxes, oy, ox, ch, cw):
    h, w = frames[0].shape
    cropped = crop_frames(frames, oy, ox, ch, cw)
    out = [_resize_to(f, h, w) for f in cropped]
    if boxes is None:
        return out, None
    sy, sx = h / ch, w / cw
    new_boxes = [
        _clip_box(((b[0] - ox) * sx, (b[1] - oy) * sy, (b[2] - ox) * sx, (b[3] - oy) * sy), h, w)
        for b in boxes
    ]
    return out, new_boxes


def augment(frames: Sequence[np.ndarray], seed, kind: str,
            boxes: list[Box] | None = None, pepper_fraction: float = 0.02):
    """Apply one augmentation kind to frames (and boxes, when given).

    ``seed`` may be an int or a numpy Generator. Returns (frames, boxes);
    boxes is None when none were passed.
    """
    if not frames:
        raise AugmentError("augment needs at least one frame")
    if kind not in KINDS:
        raise AugmentError(f"unknown augmentation kind {kind!r}; expected one of {KINDS}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    h, w = frames[0].shape

    if kind == "none":
        return [f.copy() for f in frames], None if boxes is None else [tuple(b) for b in boxes]

    if kind == "horizontal_flip":
        out = [f[:, ::-1].copy() for f in frames]
        new_boxes = None if boxes is None else [(w - b[2], b[1], w - b[0], b[3]) for b in boxes]
        return out, new_boxes

    if kind == "vertical_flip":
        out = [f[::-1, :].copy() for f in frames]
        new_boxes = None if boxes is None else [(b[0], h - b[3], b[2], h - b[1]) for b in boxes]
        return out, new_boxes

    if kind == "random_pepper":
        if pepper_fraction < 0.0 or pepper_fraction > 1.0:
            raise AugmentError(f"pepper fraction must be in [0, 1], got {pepper_fraction}")
        hit = rng.random((h, w)) < pepper_fraction
        salt = rng.random((h, w)) < 0.5
        out = [np.where(hit, np.where(salt, 1.0, 0.0), f) for f in frames]
        return out, None if boxes is None else [tuple(b) for b in boxes]

    if kind in ("random_crop", "center_crop"):
        if kind == "center_crop":
            ch, cw = round(0.85 * h), round(0.85 * w)
            oy, ox = (h - ch) // 2, (w - cw) // 2
        else:
            s = rng.uniform(0.8, 1.0)
            ch, cw = max(1, round(s * h)), max(1, round(s * w))
            # keep the crop window around the annotated objects
            if boxes:
                y_lo = max(0, int(np.ceil(max(b[3] for b in boxes))) - ch)
                y_hi = min(h - ch, int(np.floor(min(b[1] for b in boxes))))
                x_lo = max(0, int(np.ceil(max(b[2] for b in boxes))) - cw)
                x_hi = min(w - cw, int(np.floor(min(b[0] for b in boxes))))
                y_hi, x_hi = max(y_lo, y_hi), max(x_lo, x_hi)
            else:
                y_lo, y_hi = 0, h - ch
                x_lo, x_hi = 0, w - cw
            oy = int(rng.integers(y_lo, y_hi + 1))
            ox = int(rng.integers(x_lo, x_hi + 1))
        return _crop_and_restore(frames, boxes, oy, ox, ch, cw)

    if kind == "resize":
        s = rng.uniform(0.8, 1.0)
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        ys = (np.arange(h) - cy) / s + cy
        xs = (np.arange(w) - cx) / s + cx
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        out = [_bilinear(f, yy, xx) for f in frames]
        if boxes is None:
            return out, None
        new_boxes = [
            _clip_box(((b[0] - cx) * s + cx, (b[1] - cy) * s + cy,
                       (b[2] - cx) * s + cx, (b[3] - cy) * s + cy), h, w)
            for b in boxes
        ]
        return out, new_boxes

    # random_rotation
    angle = rng.uniform(-15.0, 15.0) * np.pi / 180.0
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = yy - cy, xx - cx
    src_y = cy + sin_a * dx * -1.0 + cos_a * dy
    src_x = cx + cos_a * dx + sin_a * dy
    out = [_bilinear(f, src_y, src_x) for f in frames]
    if boxes is None:
        return out, None
    new_boxes = []
    for b in boxes:
        corners = np.array([
            [b[0], b[1]], [b[2], b[1]], [b[0], b[3]], [b[2], b[3]]
        ])
        rel_x = corners[:, 0] - cx
        rel_y = corners[:, 1] - cy
        rx = cx + cos_a * rel_x - sin_a * rel_y
        ry = cy + sin_a * rel_x + cos_a * rel_y
        new_boxes.append(_clip_box((rx.min(), ry.min(), rx.max(), ry.max()), h, w))
    return out, new_boxes
