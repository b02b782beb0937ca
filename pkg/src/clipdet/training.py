"""Training loop, run records, and the ablation grid runner.

One optimizer step per clip. Each epoch re-draws every training video's
shuffle permutation and visits all (video, frame) clip positions in a
seeded random order. Whole-sample augmentation (flip / scale / crop) is
applied to ordered and shuffled frames together with the ground-truth
boxes; the configured augmentation kind additionally hits the shuffled
frames only.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import augment
from .autodiff import backward, set_debug_checks
from .checkpoint import assign_params, load_params, save_params
from .config import ModelConfig, RunConfig, load_run_config, run_config_from_dict
from .dataset import load_dataset
from .evaluation import EvalReport, classification_accuracy, evaluate
from .head import CLASS_NAMES
from .inference import ground_truth_from_samples, predict_dataset
from .losses import LossWeights, detection_loss, match_predictions, video_class_loss
from .model import Detector
from .optim import Adam, clip_grad_norm
from .synth import Clip, VideoSample, make_shuffle_plan, sample_clip

LABEL_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}
MAX_RECORDED_STEPS = 100


@dataclass
class RunRecord:
    """Everything needed to reproduce and audit one training run."""

    config: dict
    config_hash: str
    step_losses: list[float]
    epoch_losses: list[dict]
    grad_clip_events: int
    wall_clock_sec: float
    eval_report: dict | None
    notes: str = ""

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0xEB0C, epoch])


def _normalized_gt(boxes, resolution) -> list[tuple[float, float, float, float]]:
    h, w = resolution
    return [(b[0] / w, b[1] / h, b[2] / w, b[3] / h) for b in boxes]


def _augment_clip(clip: Clip, cfg: RunConfig, rng: np.random.Generator,
                  use_inter: bool) -> Clip:
    frames = list(clip.frames) + list(clip.shuffled_frames)
    boxes = clip.boxes
    if cfg.whole_sample_aug:
        if rng.random() < 0.5:
            frames, boxes = augment(frames, rng, "horizontal_flip", boxes)
        roll = rng.random()
        if roll < 0.3:
            frames, boxes = augment(frames, rng, "random_crop", boxes)
        elif roll < 0.6:
            frames, boxes = augment(frames, rng, "resize", boxes)
    ordered, shuffled = frames[:3], frames[3:]
    if use_inter and cfg.augmentation != "none":
        shuffled, _ = augment(shuffled, rng, cfg.augmentation)
    return Clip(
        center_index=clip.center_index,
        frames=tuple(ordered),
        shuffled_frames=tuple(shuffled),
        boxes=boxes,
        video_label=clip.video_label,
    )


def evaluate_model(model: Detector, test_videos: list[VideoSample], cfg: RunConfig) -> EvalReport:
    use_inter, use_intra = cfg.fusion_switches
    records, video_labels = predict_dataset(model, test_videos, use_inter, use_intra)
    report = evaluate(records, ground_truth_from_samples(test_videos), mode=cfg.eval_mode)
    if cfg.use_video_classifier:
        report.classification_accuracy = classification_accuracy(
            video_labels, {v.id: v.video_label for v in test_videos}
        )
    return report


def train(config: RunConfig, out_dir=None,
          dataset: list[VideoSample] | None = None) -> tuple[RunRecord, Detector]:
    """Train one model; returns the record and the trained detector.

    When ``out_dir`` is given, writes checkpoint.bin, config.json and
    record.json there.
    """
    cfg = config.validate()
    set_debug_checks(cfg.debug_checks)
    samples = dataset if dataset is not None else load_dataset(cfg.dataset)
    train_videos = [s for s in samples if s.split == "train"]
    test_videos = [s for s in samples if s.split == "test"]
    if not train_videos:
        raise ValueError("dataset has no training videos")
    resolution = train_videos[0].resolution

    model = Detector(cfg.model, resolution, seed=cfg.seed)
    params = model.params(include_video_classifier=True)
    opt = Adam(params, cfg.learning_rate, weight_decay=cfg.weight_decay)
    weights = LossWeights(cfg.lambda_cls, cfg.lambda_l1, cfg.lambda_giou)
    use_inter, use_intra = cfg.fusion_switches
    classify = cfg.use_video_classifier and cfg.lambda_video > 0

    step = 0
    clip_events = 0
    step_losses: list[float] = []
    epoch_losses: list[dict] = []
    t0 = time.perf_counter()
    stop = False

    for epoch in range(cfg.epochs):
        rng = _epoch_rng(cfg.seed, epoch)
        plans = {
            v.id: make_shuffle_plan(v.frame_count, int(rng.integers(0, 2**31 - 1)))
            for v in train_videos
        }
        order = [(vi, k) for vi, v in enumerate(train_videos) for k in range(v.frame_count)]
        order = [order[i] for i in rng.permutation(len(order))]
        sums: dict[str, float] = {}
        count = 0

        for vi, k in order:
            video = train_videos[vi]
            clip = _augment_clip(sample_clip(video, k, plans[video.id]), cfg, rng, use_inter)
            outputs = model.forward_clip(clip, use_inter, use_intra, classify_video=classify)

            gt_boxes = _normalized_gt(clip.boxes, resolution)
            gt_classes = [LABEL_INDEX[clip.video_label]] * len(gt_boxes)
            match = match_predictions(outputs.detections, gt_boxes, gt_classes, weights)
            loss, parts = detection_loss(
                outputs.detections, gt_boxes, gt_classes, match, weights, cfg.no_object_weight
            )
            if classify:
                vloss = video_class_loss(outputs.video_probs, LABEL_INDEX[clip.video_label])
                loss = loss + cfg.lambda_video * vloss
                parts["video"] = float(vloss.data)
            else:
                parts["video"] = 0.0
            parts["total"] = float(loss.data)

            opt.zero_grad()
            backward(loss)
            if cfg.grad_clip > 0:
                if clip_grad_norm(params, cfg.grad_clip) > cfg.grad_clip:
                    clip_events += 1
            if cfg.warmup_steps:
                frac = min(1.0, (step + 1) / cfg.warmup_steps)
                opt.learning_rate = cfg.learning_rate * frac
            opt.step()

            if len(step_losses) < MAX_RECORDED_STEPS:
                step_losses.append(parts["total"])
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + value
            count += 1
            step += 1
            if cfg.max_steps is not None and step >= cfg.max_steps:
                stop = True
                break

        if count:
            epoch_losses.append({k: v / count for k, v in sorted(sums.items())})
        if stop:
            break

    eval_report = evaluate_model(model, test_videos, cfg) if test_videos else None

    record = RunRecord(
        config=cfg.to_dict(),
        config_hash=cfg.config_hash(),
        step_losses=step_losses,
        epoch_losses=epoch_losses,
        grad_clip_events=clip_events,
        wall_clock_sec=time.perf_counter() - t0,
        eval_report=eval_report.to_dict() if eval_report else None,
        notes=cfg.notes,
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_params(out / "checkpoint.bin", params)
        (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")
        record.save(out / "record.json")
    return record, model


def load_model(checkpoint_path, config: RunConfig | None, resolution) -> tuple[Detector, RunConfig]:
    """Rebuild a detector from a checkpoint plus its run config.

    When ``config`` is None, a config.json next to the checkpoint is used.
    """
    ckpt = Path(checkpoint_path)
    if config is None:
        sibling = ckpt.parent / "config.json"
        if not sibling.exists():
            raise FileNotFoundError(
                f"no config given and {sibling} does not exist; pass --config"
            )
        config = load_run_config(sibling)
    model = Detector(config.model, resolution, seed=config.seed)
    assign_params(model.params(include_video_classifier=True), load_params(ckpt))
    return model, config


@dataclass
class AblationResult:
    """Mean AP metrics per grid entry, with the per-seed breakdown."""

    rows: dict[str, dict]
    seeds: list[int]

    def to_json(self) -> str:
        return json.dumps({"seeds": self.seeds, "rows": self.rows}, indent=1)


def ablate(grid: dict[str, RunConfig], seeds: list[int], out_dir=None,
           dataset: list[VideoSample] | None = None) -> AblationResult:
    """Run every config for every seed and aggregate mean AP/AP50/AP75."""
    if not seeds:
        raise ValueError("ablate needs at least one seed")
    rows: dict[str, dict] = {}
    records: list[tuple[str, int, RunRecord]] = []
    for name, base in grid.items():
        per_seed = {}
        for seed in seeds:
            cfg = dataclasses.replace(base, seed=seed)
            run_out = Path(out_dir) / f"{name.replace('+', '_')}_s{seed}" if out_dir else None
            record, _ = train(cfg, out_dir=run_out, dataset=dataset)
            if record.eval_report is None:
                raise ValueError(f"grid entry {name!r}: dataset has no test split to evaluate")
            per_seed[seed] = {
                "AP": record.eval_report["AP"],
                "AP50": record.eval_report["AP50"],
                "AP75": record.eval_report["AP75"],
            }
            records.append((name, seed, record))
        rows[name] = {
            "AP": float(np.mean([per_seed[s]["AP"] for s in seeds])),
            "AP50": float(np.mean([per_seed[s]["AP50"] for s in seeds])),
            "AP75": float(np.mean([per_seed[s]["AP75"] for s in seeds])),
            "per_seed": {str(s): per_seed[s] for s in seeds},
        }
    result = AblationResult(rows=rows, seeds=list(seeds))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(result.to_json(), encoding="utf-8")
        (out / "ablation.txt").write_text(format_ablation_table(result), encoding="utf-8")
    return result


def format_ablation_table(result: AblationResult) -> str:
    """Text table shaped like the usual ablation summaries (values x100)."""
    width = max(len(name) for name in result.rows) + 2
    lines = [f"{'':<{width}}{'AP':>6} {'AP50':>6} {'AP75':>6}"]
    for name, row in result.rows.items():
        lines.append(
            f"{name:<{width}}{row['AP'] * 100:6.1f} {row['AP50'] * 100:6.1f} {row['AP75'] * 100:6.1f}"
        )
    return "\n".join(lines)
