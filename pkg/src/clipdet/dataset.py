"""Dataset persistence: 8-bit PGM frames plus a JSON manifest.

Directory layout::

    <root>/manifest.json
    <root>/<video_id>/frame_<k>.pgm     (k zero-padded to 4 digits)

Manifest schema: ``{"videos": [{"id", "label", "frame_count",
"resolution": [h, w], "boxes": [[x1, y1, x2, y2], ...], "split"}]}`` with
one box per frame in absolute pixel coordinates.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .synth import LABELS, VideoSample


class DatasetError(ValueError):
    pass


def write_pgm(path, frame: np.ndarray) -> None:
    data = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":  # comment to end of line
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise DatasetError(f"{path}: not a binary PGM file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DatasetError(f"{path}: expected 8-bit PGM, maxval is {maxval}")
    pixels = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise DatasetError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w).astype(np.float64) / 255.0


def _frame_name(k: int) -> str:
    return f"frame_{k:04d}.pgm"


def save_dataset(samples: list[VideoSample], root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    videos = []
    for sample in samples:
        sample.validate()
        if sample.split not in ("train", "test"):
            raise DatasetError(f"video {sample.id}: split must be train or test, got {sample.split!r}")
        vdir = root / sample.id
        vdir.mkdir(exist_ok=True)
        for k, frame in enumerate(sample.frames):
            write_pgm(vdir / _frame_name(k), frame)
        h, w = sample.resolution
        videos.append({
            "id": sample.id,
            "label": sample.video_label,
            "frame_count": sample.frame_count,
            "resolution": [h, w],
            "boxes": [[float(v) for v in b] for b in sample.boxes],
            "split": sample.split,
        })
    manifest = {"videos": videos}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def _require(entry: dict, key: str, vid: str):
    if key not in entry:
        raise DatasetError(f"manifest entry for {vid!r} is missing key {key!r}")
    return entry[key]


def load_manifest(root) -> list[dict]:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DatasetError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DatasetError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(manifest, dict) or "videos" not in manifest:
        raise DatasetError(f"{path}: manifest must be an object with a 'videos' list")
    entries = manifest["videos"]
    for entry in entries:
        vid = entry.get("id", "<missing id>")
        label = _require(entry, "label", vid)
        if label not in LABELS:
            raise DatasetError(f"video {vid}: label {label!r} is not one of {LABELS}")
        t = _require(entry, "frame_count", vid)
        res = _require(entry, "resolution", vid)
        if len(res) != 2 or res[0] < 1 or res[1] < 1:
            raise DatasetError(f"video {vid}: bad resolution {res}")
        boxes = _require(entry, "boxes", vid)
        if len(boxes) != t:
            raise DatasetError(f"video {vid}: {len(boxes)} boxes for {t} frames")
        h, w = res
        for k, b in enumerate(boxes):
            if len(b) != 4:
                raise DatasetError(f"video {vid}: frame {k} box {b} must have 4 coordinates")
            x1, y1, x2, y2 = b
            if not (x2 > x1 and y2 > y1):
                raise DatasetError(f"video {vid}: frame {k} box {b} violates x1 < x2 and y1 < y2")
            if not (0 <= x1 and x2 <= w and 0 <= y1 and y2 <= h):
                raise DatasetError(f"video {vid}: frame {k} box {b} outside {w}x{h} frame")
        split = _require(entry, "split", vid)
        if split not in ("train", "test"):
            raise DatasetError(f"video {vid}: split {split!r} is not train/test")
    return entries


def load_dataset(root) -> list[VideoSample]:
    root = Path(root)
    entries = load_manifest(root)
    samples = []
    for entry in entries:
        vid = entry["id"]
        h, w = entry["resolution"]
        frames = []
        for k in range(entry["frame_count"]):
            fpath = root / vid / _frame_name(k)
            if not fpath.exists():
                raise DatasetError(f"video {vid}: missing frame file {fpath}")
            frame = read_pgm(fpath)
            if frame.shape != (h, w):
                raise DatasetError(
                    f"video {vid}: frame {k} is {frame.shape}, manifest says {(h, w)}"
                )
            frames.append(frame)
        samples.append(VideoSample(
            id=vid,
            frames=frames,
            boxes=[tuple(float(v) for v in b) for b in entry["boxes"]],
            video_label=entry["label"],
            split=entry["split"],
        ).validate())
    return samples
