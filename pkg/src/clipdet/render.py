"""Overlay predicted and ground-truth boxes on frames as PPM images."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .dataset import _frame_name, load_manifest, read_pgm

GT_COLOR = (255, 255, 255)
CLASS_COLORS = {"benign": (80, 220, 80), "malignant": (230, 70, 70)}


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.astype(np.uint8).tobytes())


def draw_rect(img: np.ndarray, box, color, thickness: int = 1) -> None:
    h, w, _ = img.shape
    x1 = int(np.clip(round(box[0]), 0, w - 1))
    y1 = int(np.clip(round(box[1]), 0, h - 1))
    x2 = int(np.clip(round(box[2]), 1, w))
    y2 = int(np.clip(round(box[3]), 1, h))
    for t in range(thickness):
        yt, yb = min(y1 + t, h - 1), max(min(y2 - 1 - t, h - 1), 0)
        xl, xr = min(x1 + t, w - 1), max(min(x2 - 1 - t, w - 1), 0)
        img[yt, x1:x2] = color
        img[yb, x1:x2] = color
        img[y1:y2, xl] = color
        img[y1:y2, xr] = color


def render_predictions(data_dir, records: list[dict], out_dir,
                       score_threshold: float = 0.3) -> int:
    """Write one annotated PPM per predicted frame; returns the file count.

    Ground truth is drawn in white, predictions in a per-class color.
    """
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = {e["id"]: e for e in load_manifest(data_dir)}
    by_frame = defaultdict(list)
    for rec in records:
        by_frame[(rec["video_id"], int(rec["frame"]))].append(rec)

    written = 0
    for (vid, k), recs in sorted(by_frame.items()):
        entry = entries.get(vid)
        if entry is None:
            raise ValueError(f"predictions reference unknown video {vid!r}")
        gray = read_pgm(data_dir / vid / _frame_name(k))
        rgb = np.repeat((gray * 255.0).astype(np.uint8)[:, :, None], 3, axis=2)
        draw_rect(rgb, entry["boxes"][k], GT_COLOR)
        for rec in recs:
            for box, score, cls in zip(rec["boxes"], rec["scores"], rec["classes"]):
                if score >= score_threshold:
                    draw_rect(rgb, box, CLASS_COLORS.get(cls, (255, 255, 0)))
        vdir = out_dir / vid
        vdir.mkdir(exist_ok=True)
        write_ppm(vdir / f"frame_{k:04d}.ppm", rgb)
        written += 1
    return written
