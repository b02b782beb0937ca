"""Synthetic lesion videos: a moving elliptical target over multiplicative
speckle, scanned from appearance through its largest section back to
disappearance.

Benign videos carry a smooth convex ellipse with strong contrast; malignant
ones a star-perturbed irregular boundary with weaker contrast. Every frame
has exactly one tight ground-truth box. Frames are quantized to the 8-bit
grid at generation time so that disk round trips are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, check_box

LABELS = ("benign", "malignant")


@dataclass(frozen=True)
class VideoConfig:
    height: int = 96
    width: int = 96
    frame_count: int = 24
    label: str = "benign"

    def validate(self) -> "VideoConfig":
        if self.frame_count < 3:
            raise ValueError(f"frame_count must be >= 3, got {self.frame_count}")
        if self.height < 32 or self.width < 32:
            raise ValueError(f"resolution must be at least 32x32, got {self.height}x{self.width}")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        return self


@dataclass
class VideoSample:
    """Ordered frames with one ground-truth box per frame and a video label.

    ``masks`` holds the generator's binary lesion masks when available; it
    is not persisted by the dataset writer.
    """

    id: str
    frames: list[np.ndarray]
    boxes: list[Box]
    video_label: str
    split: str = "train"
    masks: list[np.ndarray] | None = None

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames[0].shape

    def validate(self) -> "VideoSample":
        if self.frame_count < 3:
            raise ValueError(f"video {self.id}: needs at least 3 frames, has {self.frame_count}")
        if len(self.boxes) != self.frame_count:
            raise ValueError(f"video {self.id}: {len(self.boxes)} boxes for {self.frame_count} frames")
        if self.video_label not in LABELS:
            raise ValueError(f"video {self.id}: unknown label {self.video_label!r}")
        h, w = self.resolution
        for k, frame in enumerate(self.frames):
            if frame.shape != (h, w):
                raise ValueError(f"video {self.id}: frame {k} has shape {frame.shape}, expected {(h, w)}")
        for k, b in enumerate(self.boxes):
            x1, y1, x2, y2 = check_box(b)
            if not (0.0 <= x1 and x2 <= w and 0.0 <= y1 and y2 <= h):
                raise ValueError(f"video {self.id}: frame {k} box {b} outside {w}x{h} frame")
        return self


@dataclass(frozen=True)
class ShufflePlan:
    """A bijection on frame indices defining the shuffled view of a video."""

    permutation: tuple[int, ...]
    seed: int | None = None

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError("shuffle permutation is not a bijection on frame indices")

    def __len__(self) -> int:
        return len(self.permutation)

    def inverse(self) -> "ShufflePlan":
        inv = [0] * len(self.permutation)
        for pos, idx in enumerate(self.permutation):
            inv[idx] = pos
        return ShufflePlan(tuple(inv), seed=self.seed)


def make_shuffle_plan(frame_count: int, seed: int) -> ShufflePlan:
    rng = np.random.default_rng(seed)
    return ShufflePlan(tuple(int(i) for i in rng.permutation(frame_count)), seed=seed)


def identity_plan(frame_count: int) -> ShufflePlan:
    return ShufflePlan(tuple(range(frame_count)))


@dataclass
class Clip:
    """Three neighboring frames of a video and their shuffled counterparts.

    Ordered frames come from indices (k-1, k, k+1) clamped to the video;
    shuffled frames come from the same (clamped) positions of the permuted
    sequence. Ground truth is that of the center frame.
    """

    center_index: int
    frames: tuple[np.ndarray, np.ndarray, np.ndarray]
    shuffled_frames: tuple[np.ndarray, np.ndarray, np.ndarray]
    boxes: list[Box]
    video_label: str


def sample_clip(video: VideoSample, k: int, plan: ShufflePlan) -> Clip:
    t = video.frame_count
    if not 0 <= k < t:
        raise IndexError(f"clip center {k} out of range for {t} frames")
    if len(plan) != t:
        raise ValueError(f"shuffle plan covers {len(plan)} frames, video has {t}")
    positions = [max(0, min(t - 1, j)) for j in (k - 1, k, k + 1)]
    ordered = tuple(video.frames[j] for j in positions)
    shuffled = tuple(video.frames[plan.permutation[j]] for j in positions)
    return Clip(
        center_index=k,
        frames=ordered,
        shuffled_frames=shuffled,
        boxes=[video.boxes[k]],
        video_label=video.video_label,
    )


def _smooth_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Low-frequency random field in [-1, 1] from a few cosine waves."""
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    out = np.zeros((h, w))
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 2.5, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += rng.uniform(0.4, 1.0) * np.cos(2.0 * np.pi * (fy * yy + fx * xx) + phase)
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def generate_video(seed: int, config: VideoConfig) -> VideoSample:
    """Deterministically synthesize one annotated lesion video."""
    cfg = config.validate()
    rng = np.random.default_rng(seed)
    h, w, t = cfg.height, cfg.width, cfg.frame_count
    malignant = cfg.label == "malignant"

    base = 0.45 + 0.18 * _smooth_field(rng, h, w)

    r_max = rng.uniform(0.13, 0.20) * min(h, w)
    aspect = rng.uniform(0.6, 0.95)
    tilt = rng.uniform(0.0, np.pi)
    # center stays inside the middle of the frame so crops keep the lesion
    cy0 = h * (0.5 + rng.uniform(-0.10, 0.10))
    cx0 = w * (0.5 + rng.uniform(-0.10, 0.10))
    drift_amp = rng.uniform(0.02, 0.055, size=2) * np.array([h, w])
    drift_phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
    drift_freq = rng.uniform(0.5, 1.5, size=2)

    if malignant:
        spike_orders = (5, 7, 9)
        spike_amp = rng.uniform(0.16, 0.24)
        weights = rng.uniform(0.5, 1.0, size=len(spike_orders))
        weights /= weights.sum()
        spike_phases = rng.uniform(0.0, 2.0 * np.pi, size=len(spike_orders))
        depth = rng.uniform(0.26, 0.34)
    else:
        depth = rng.uniform(0.5, 0.6)

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    cos_t, sin_t = np.cos(tilt), np.sin(tilt)

    frames: list[np.ndarray] = []
    boxes: list[Box] = []
    masks: list[np.ndarray] = []
    for k in range(t):
        phase = (k + 0.5) / t
        scale = 0.25 + 0.75 * np.sin(np.pi * phase)
        a = r_max * scale
        b = a * aspect
        cy = cy0 + drift_amp[0] * np.sin(2.0 * np.pi * drift_freq[0] * phase + drift_phase[0])
        cx = cx0 + drift_amp[1] * np.sin(2.0 * np.pi * drift_freq[1] * phase + drift_phase[1])

        dy, dx = yy - cy, xx - cx
        u = dx * cos_t + dy * sin_t
        v = -dx * sin_t + dy * cos_t
        rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        if malignant:
            theta = np.arctan2(v / b, u / a)
            boundary = 1.0 + spike_amp * sum(
                wgt * np.sin(order * theta + ph)
                for order, wgt, ph in zip(spike_orders, weights, spike_phases)
            )
        else:
            boundary = 1.0
        mask = rho <= boundary
        alpha = np.clip((boundary - rho) / 0.12, 0.0, 1.0)

        speckle = rng.gamma(shape=8.0, scale=1.0 / 8.0, size=(h, w))
        frame = np.clip(base * speckle, 0.0, 1.0)
        frame *= 1.0 - depth * alpha
        frame = np.round(frame * 255.0) / 255.0
        frames.append(frame)
        masks.append(mask)

        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        boxes.append((float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1)))

    label_tag = "m" if malignant else "b"
    sample = VideoSample(
        id=f"v{seed:05d}{label_tag}",
        frames=frames,
        boxes=boxes,
        video_label=cfg.label,
        masks=masks,
    )
    return sample.validate()


def generate_dataset(seed: int, count: int, config: VideoConfig | None = None,
                     malignant_fraction: float = 0.5) -> list[VideoSample]:
    """Generate ``count`` videos with deterministic per-video seeds."""
    cfg = config or VideoConfig()
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        label = "malignant" if rng.random() < malignant_fraction else "benign"
        video_seed = int(rng.integers(0, 2**31 - 1))
        vcfg = VideoConfig(cfg.height, cfg.width, cfg.frame_count, label)
        samples.append(generate_video(video_seed, vcfg))
    return samples


def split_samples(samples: list[VideoSample], test_fraction: float, seed: int) -> None:
    """Assign disjoint train/test splits in place; round(test_fraction * n) test videos."""
    n = len(samples)
    n_test = int(round(test_fraction * n))
    order = np.random.default_rng(seed).permutation(n)
    test_ids = set(int(i) for i in order[:n_test])
    for i, s in enumerate(samples):
        s.split = "test" if i in test_ids else "train"
