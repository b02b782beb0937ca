"""Full detector: shared backbone, fusion stages, head, video classifier.

Variant switches turn each fusion stage into an exact pass-through: with
inter fusion off the fused maps ARE the local pyramids (same tensors), and
with intra fusion off the clip feature IS the center frame's map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad
from .backbone import Backbone, FeaturePyramid
from .boxes import cxcywh_to_xyxy
from .config import ModelConfig
from .fusion import InterVideoFusion, IntraVideoFusion
from .head import CLASS_NAMES, DetectionHead, DetectionSet, LongRangeFeature, VideoClassifier
from .synth import Clip


@dataclass
class ClipOutputs:
    detections: DetectionSet
    long_range: LongRangeFeature
    video_probs: Tensor | None
    local: list[FeaturePyramid]
    global_: list[FeaturePyramid] | None
    fused: list[FeaturePyramid]
    clip_feature: FeaturePyramid


@dataclass
class FrameDetections:
    """Score-filtered detections of one frame, boxes in pixel corners."""

    boxes: list[tuple[float, float, float, float]] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    classes: list[str] = field(default_factory=list)


class Detector:
    def __init__(self, config: ModelConfig, resolution: tuple[int, int], seed: int = 0):
        config.validate()
        self.config = config
        self.resolution = tuple(resolution)
        ss = np.random.SeedSequence([int(seed), 0xC11D])
        rngs = [np.random.default_rng(child) for child in ss.spawn(5)]
        self.backbone = Backbone(
            rngs[0], self.resolution, config.backbone_channels, config.feature_dim
        )
        self.inter = InterVideoFusion(
            rngs[1], config.feature_dim,
            similarity=config.inter_similarity, residual=config.fusion_residual,
        )
        self.intra = IntraVideoFusion(
            rngs[2], config.feature_dim, residual=config.fusion_residual
        )
        self.head = DetectionHead(
            rngs[3], dim=config.feature_dim, num_queries=config.num_queries,
            num_heads=config.num_heads, enc_layers=config.enc_layers,
            dec_layers=config.dec_layers, ffn_dim=config.ffn_dim,
        )
        self.video_classifier = VideoClassifier(rngs[4], config.feature_dim)

    def params(self, include_video_classifier: bool = True) -> dict[str, Tensor]:
        out = {}
        for prefix, component in (
            ("backbone", self.backbone),
            ("inter", self.inter),
            ("intra", self.intra),
            ("head", self.head),
        ):
            out.update({f"{prefix}.{k}": v for k, v in component.params().items()})
        if include_video_classifier:
            out.update({f"video_cls.{k}": v for k, v in self.video_classifier.params().items()})
        return out

    def forward_clip(self, clip: Clip, use_inter: bool, use_intra: bool,
                     classify_video: bool = True) -> ClipOutputs:
        local = [self.backbone.extract(f) for f in clip.frames]
        if use_inter:
            global_ = [self.backbone.extract(f) for f in clip.shuffled_frames]
            fused = [self.inter.fuse(l, g) for l, g in zip(local, global_)]
        else:
            global_ = None
            fused = local  # exact pass-through
        clip_feature = self.intra.fuse(*fused) if use_intra else fused[1]
        detections, long_range = self.head.forward(clip_feature)
        video_probs = self.video_classifier(long_range) if classify_video else None
        return ClipOutputs(
            detections=detections,
            long_range=long_range,
            video_probs=video_probs,
            local=local,
            global_=global_,
            fused=fused,
            clip_feature=clip_feature,
        )

    def detections_to_pixels(self, detections: DetectionSet,
                             score_threshold: float = 0.05) -> FrameDetections:
        """Convert query outputs to scored pixel boxes, dropping weak ones.

        A query's score is (1 - p(no-object)) times its best foreground
        class probability.
        """
        h, w = self.resolution
        probs = detections.class_probs.data
        out = FrameDetections()
        for q in range(probs.shape[0]):
            fg = probs[q, : len(CLASS_NAMES)]
            score = float((1.0 - probs[q, -1]) * fg.max())
            if score < score_threshold:
                continue
            x1, y1, x2, y2 = cxcywh_to_xyxy(detections.boxes.data[q])
            out.boxes.append((
                max(0.0, x1 * w), max(0.0, y1 * h),
                min(float(w), x2 * w), min(float(h), y2 * h),
            ))
            out.scores.append(score)
            out.classes.append(CLASS_NAMES[int(fg.argmax())])
        return out

    def predict_clip(self, clip: Clip, use_inter: bool, use_intra: bool,
                     score_threshold: float = 0.05) -> tuple[FrameDetections, str]:
        """Inference on one clip: pixel detections plus the video-label vote."""
        with no_grad():
            outputs = self.forward_clip(clip, use_inter, use_intra, classify_video=True)
        label = CLASS_NAMES[int(outputs.video_probs.data.argmax())]
        return self.detections_to_pixels(outputs.detections, score_threshold), label
