"""COCO-protocol average precision over a test video set.

Per IoU threshold, detections are ranked by score and greedily matched
within their frame to the highest-IoU unmatched ground truth at or above
the threshold; the 101-point interpolated area under the precision-recall
curve is averaged over thresholds 0.50:0.05:0.95. The default mode is
class-agnostic localization; class-aware mode computes per-class AP and
averages over classes present in the ground truth.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, check_box, iou
from .head import CLASS_NAMES

IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = np.linspace(0.0, 1.0, 101)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    video_id: str
    frame: int
    box: Box
    score: float
    label: str | None = None


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    per_threshold: list[dict]
    per_video: dict[str, dict]
    mode: str
    classification_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "AP": self.ap,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "mode": self.mode,
            "classification_accuracy": self.classification_accuracy,
            "per_threshold": self.per_threshold,
            "per_video": self.per_video,
        }


def detections_from_records(records) -> list[Detection]:
    """Parse exported frame records ({video_id, frame, boxes, scores, classes})."""
    out = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise EvaluationError(f"record {i} is not an object")
        for key in ("video_id", "frame", "boxes", "scores", "classes"):
            if key not in rec:
                raise EvaluationError(f"record {i} is missing key {key!r}")
        boxes, scores, classes = rec["boxes"], rec["scores"], rec["classes"]
        if not (len(boxes) == len(scores) == len(classes)):
            raise EvaluationError(
                f"record {i}: boxes/scores/classes lengths differ "
                f"({len(boxes)}/{len(scores)}/{len(classes)})"
            )
        for b, s, c in zip(boxes, scores, classes):
            if len(b) != 4:
                raise EvaluationError(f"record {i}: box {b} must have 4 coordinates")
            if not np.isfinite(s):
                raise EvaluationError(f"record {i}: non-finite score {s}")
            if c is not None and c not in CLASS_NAMES:
                raise EvaluationError(f"record {i}: unknown class {c!r}")
            out.append(Detection(
                video_id=str(rec["video_id"]), frame=int(rec["frame"]),
                box=check_box(b), score=float(s), label=c,
            ))
    return out


GroundTruth = dict[tuple[str, int], list[tuple[Box, str | None]]]


def ground_truth_from_manifest(entries: list[dict]) -> GroundTruth:
    gt: GroundTruth = {}
    for entry in entries:
        vid = entry["id"]
        for k, b in enumerate(entry["boxes"]):
            gt[(vid, k)] = [(check_box(b), entry["label"])]
    return gt


def _sorted_dets(dets: list[Detection]) -> list[Detection]:
    order = sorted(
        range(len(dets)),
        key=lambda i: (-dets[i].score, dets[i].video_id, dets[i].frame, i),
    )
    return [dets[i] for i in order]


def _match_flags(dets_sorted: list[Detection], gt: GroundTruth, threshold: float) -> np.ndarray:
    """True/false positive flag per detection, in ranking order."""
    taken: dict[tuple[str, int], list[bool]] = defaultdict(list)
    flags = np.zeros(len(dets_sorted), dtype=bool)
    for i, det in enumerate(dets_sorted):
        key = (det.video_id, det.frame)
        candidates = gt.get(key, [])
        used = taken[key]
        if len(used) < len(candidates):
            used.extend([False] * (len(candidates) - len(used)))
        best_iou, best_j = 0.0, -1
        for j, (gbox, _) in enumerate(candidates):
            if used[j]:
                continue
            overlap = iou(det.box, gbox)
            if overlap >= threshold and overlap > best_iou:
                best_iou, best_j = overlap, j
        if best_j >= 0:
            used[best_j] = True
            flags[i] = True
    return flags


def _ap_from_flags(flags: np.ndarray, n_gt: int) -> tuple[float, dict]:
    if n_gt == 0 or flags.size == 0:
        interp = np.zeros_like(RECALL_GRID)
        return 0.0, {"recall": [], "precision": [], "interpolated": interp.tolist()}
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    interp = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    assert np.all(np.diff(interp) <= 1e-12), "interpolated precision must be non-increasing"
    ap = float(interp.mean())
    return ap, {
        "recall": recall.tolist(),
        "precision": precision.tolist(),
        "interpolated": interp.tolist(),
    }


def _ap_at_threshold(dets_sorted, gt: GroundTruth, threshold: float, mode: str) -> tuple[float, list[dict]]:
    if mode == "class-agnostic":
        n_gt = sum(len(v) for v in gt.values())
        flags = _match_flags(dets_sorted, gt, threshold)
        ap, curve = _ap_from_flags(flags, n_gt)
        curve["class"] = None
        return ap, [curve]
    aps, curves = [], []
    for cls in CLASS_NAMES:
        cls_gt = {k: [(b, l) for b, l in v if l == cls] for k, v in gt.items()}
        cls_gt = {k: v for k, v in cls_gt.items() if v}
        n_gt = sum(len(v) for v in cls_gt.values())
        if n_gt == 0:
            continue
        cls_dets = [d for d in dets_sorted if d.label == cls]
        ap, curve = _ap_from_flags(_match_flags(cls_dets, cls_gt, threshold), n_gt)
        curve["class"] = cls
        aps.append(ap)
        curves.append(curve)
    return (float(np.mean(aps)) if aps else 0.0), curves


def evaluate(predictions, ground_truth, mode: str = "class-agnostic") -> EvalReport:
    """Score predictions (records or Detection list) against ground truth.

    ``ground_truth`` is either manifest entries (as loaded from disk) or a
    prepared mapping (video_id, frame) -> [(box, label), ...].
    """
    if mode not in ("class-agnostic", "class-aware"):
        raise EvaluationError(f"unknown evaluation mode {mode!r}")
    if predictions and isinstance(predictions[0], Detection):
        dets = list(predictions)
    else:
        dets = detections_from_records(predictions)
    gt: GroundTruth = (
        ground_truth_from_manifest(ground_truth)
        if isinstance(ground_truth, list)
        else dict(ground_truth)
    )
    known_frames = set(gt.keys())
    for d in dets:
        if (d.video_id, d.frame) not in known_frames:
            raise EvaluationError(f"prediction for unknown video/frame ({d.video_id!r}, {d.frame})")

    dets_sorted = _sorted_dets(dets)
    per_threshold = []
    aps = {}
    for t in IOU_THRESHOLDS:
        ap, curves = _ap_at_threshold(dets_sorted, gt, t, mode)
        aps[t] = ap
        per_threshold.append({"threshold": t, "ap": ap, "curves": curves})

    per_video = {}
    for vid in sorted({k[0] for k in gt.keys()}):
        vid_gt = {k: v for k, v in gt.items() if k[0] == vid}
        vid_dets = [d for d in dets_sorted if d.video_id == vid]
        vid_aps = {t: _ap_at_threshold(vid_dets, vid_gt, t, mode)[0] for t in IOU_THRESHOLDS}
        per_video[vid] = {
            "AP": float(np.mean(list(vid_aps.values()))),
            "AP50": vid_aps[0.5],
            "AP75": vid_aps[0.75],
        }

    return EvalReport(
        ap=float(np.mean(list(aps.values()))),
        ap50=aps[0.5],
        ap75=aps[0.75],
        per_threshold=per_threshold,
        per_video=per_video,
        mode=mode,
    )


def majority_vote(frame_labels: list[str]) -> str:
    """Most frequent label; ties resolve to the earlier class name."""
    counts = [sum(1 for l in frame_labels if l == cls) for cls in CLASS_NAMES]
    return CLASS_NAMES[int(np.argmax(counts))]


def classification_accuracy(predicted_labels: dict[str, str], true_labels: dict[str, str]) -> float:
    """Fraction of videos whose predicted label matches the ground truth."""
    if not true_labels:
        raise EvaluationError("no ground-truth videos to score")
    missing = sorted(set(true_labels) - set(predicted_labels))
    if missing:
        raise EvaluationError(f"missing predictions for videos: {missing}")
    correct = sum(1 for vid, lab in true_labels.items() if predicted_labels[vid] == lab)
    return correct / len(true_labels)


def format_report_table(report: EvalReport) -> str:
    """Aligned text table, values x100 with one decimal."""
    header = f"{'AP':>6} {'AP50':>6} {'AP75':>6}"
    row = f"{report.ap * 100:6.1f} {report.ap50 * 100:6.1f} {report.ap75 * 100:6.1f}"
    return header + "\n" + row
