"""Inference over whole videos: per-frame detection records and video labels.

At evaluation time the shuffled stream uses a permutation derived from the
video id alone, so reports depend only on the checkpoint and the data, and
no augmentation is applied.
"""

from __future__ import annotations

import hashlib

from .evaluation import GroundTruth, majority_vote
from .model import Detector
from .synth import ShufflePlan, VideoSample, identity_plan, make_shuffle_plan, sample_clip


def eval_shuffle_plan(video_id: str, frame_count: int) -> ShufflePlan:
    """Deterministic per-video permutation, independent of any run config."""
    digest = hashlib.sha256(video_id.encode("utf-8")).digest()
    return make_shuffle_plan(frame_count, int.from_bytes(digest[:8], "little"))


def predict_video(model: Detector, video: VideoSample, use_inter: bool, use_intra: bool,
                  score_threshold: float = 0.05) -> tuple[list[dict], list[str]]:
    """One record per frame plus the per-frame video-label votes."""
    plan = (
        eval_shuffle_plan(video.id, video.frame_count)
        if use_inter
        else identity_plan(video.frame_count)
    )
    records, frame_labels = [], []
    for k in range(video.frame_count):
        clip = sample_clip(video, k, plan)
        dets, label = model.predict_clip(clip, use_inter, use_intra, score_threshold)
        records.append({
            "video_id": video.id,
            "frame": k,
            "boxes": [list(b) for b in dets.boxes],
            "scores": dets.scores,
            "classes": dets.classes,
        })
        frame_labels.append(label)
    return records, frame_labels


def predict_dataset(model: Detector, videos: list[VideoSample], use_inter: bool,
                    use_intra: bool, score_threshold: float = 0.05) -> tuple[list[dict], dict[str, str]]:
    """Records for every frame of every video, and majority-vote video labels."""
    records: list[dict] = []
    video_labels: dict[str, str] = {}
    for video in videos:
        recs, frame_labels = predict_video(model, video, use_inter, use_intra, score_threshold)
        records.extend(recs)
        video_labels[video.id] = majority_vote(frame_labels)
    return records, video_labels


def ground_truth_from_samples(videos: list[VideoSample]) -> GroundTruth:
    gt: GroundTruth = {}
    for v in videos:
        for k, box in enumerate(v.boxes):
            gt[(v.id, k)] = [(box, v.video_label)]
    return gt
