"""clipdet: video lesion detection with clip-level attention fusion.

A framework-free stack: float64 tensors with reverse-mode autodiff, a small
convolutional pyramid backbone, attention fusion across a shuffled global
stream and across neighboring frames, a set-prediction transformer head
with Hungarian-matched losses, COCO-style AP evaluation, and a synthetic
lesion video generator.
"""

from .autodiff import (
    GraphError,
    NumericsError,
    ShapeError,
    Tensor,
    backward,
    concat,
    conv2d,
    linear,
    matmul,
    maximum,
    minimum,
    narrow,
    no_grad,
    parameter,
    reshape,
    set_debug_checks,
    softmax,
    transpose,
)
from .backbone import Backbone, FeaturePyramid
from .boxes import giou, iou
from .config import ModelConfig, RunConfig, load_run_config, run_config_from_dict
from .evaluation import EvalReport, classification_accuracy, evaluate, format_report_table
from .fusion import InterVideoFusion, IntraVideoFusion, inter_fuse_level, intra_fuse_level
from .head import DetectionHead, DetectionSet, LongRangeFeature, VideoClassifier
from .losses import LossWeights, detection_loss, match_predictions, video_class_loss
from .matching import MatchResult, hungarian_match
from .model import Detector
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .synth import (
    Clip,
    ShufflePlan,
    VideoConfig,
    VideoSample,
    generate_dataset,
    generate_video,
    identity_plan,
    make_shuffle_plan,
    sample_clip,
    split_samples,
)
from .training import RunRecord, ablate, train

__version__ = "0.1.0"
