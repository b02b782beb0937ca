"""Set-prediction training losses.

Matched queries pay a class NLL plus weighted L1 and generalized-IoU box
terms; unmatched queries pay a down-weighted no-object NLL. The matching
cost matrix uses the same three terms, evaluated without gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import boxes as boxops
from .autodiff import Tensor, log, maximum, minimum, narrow, relu
from .head import NO_OBJECT, DetectionSet
from .matching import MatchResult, hungarian_match


@dataclass(frozen=True)
class LossWeights:
    cls: float = 2.0
    l1: float = 5.0
    giou: float = 2.0

    def validate(self) -> "LossWeights":
        for name, value in (("cls", self.cls), ("l1", self.l1), ("giou", self.giou)):
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative, got {value}")
        return self


def _scalar(t: Tensor, index: int) -> Tensor:
    return narrow(t, 0, index, 1)


def giou_pair(pred_cxcywh: Tensor, gt_xyxy) -> Tensor:
    """Differentiable generalized IoU between one predicted box (cxcywh
    tensor of shape [4]) and one fixed ground-truth corner box."""
    gx1, gy1, gx2, gy2 = (float(v) for v in gt_xyxy)
    cx, cy = _scalar(pred_cxcywh, 0), _scalar(pred_cxcywh, 1)
    bw, bh = _scalar(pred_cxcywh, 2), _scalar(pred_cxcywh, 3)
    px1, px2 = cx - bw * 0.5, cx + bw * 0.5
    py1, py2 = cy - bh * 0.5, cy + bh * 0.5

    inter_w = relu(minimum(px2, gx2) - maximum(px1, gx1))
    inter_h = relu(minimum(py2, gy2) - maximum(py1, gy1))
    inter = inter_w * inter_h
    union = bw * bh + (gx2 - gx1) * (gy2 - gy1) - inter
    enclosing = (maximum(px2, gx2) - minimum(px1, gx1)) * (maximum(py2, gy2) - minimum(py1, gy1))
    return (inter / union - (enclosing - union) / enclosing).sum()


def build_cost_matrix(pred: DetectionSet, gt_boxes_xyxy: list, gt_classes: list[int],
                      weights: LossWeights) -> np.ndarray:
    """n_gt x n_queries matching cost from class NLL, L1 and gIoU terms."""
    weights.validate()
    probs = pred.class_probs.data
    pboxes = pred.boxes.data
    n_q = probs.shape[0]
    cost = np.zeros((len(gt_boxes_xyxy), n_q))
    for g, (gbox, gcls) in enumerate(zip(gt_boxes_xyxy, gt_classes)):
        g_cxcywh = np.array(boxops.xyxy_to_cxcywh(gbox))
        for q in range(n_q):
            nll = -np.log(probs[q, gcls])
            l1 = float(np.abs(pboxes[q] - g_cxcywh).sum())
            gi = boxops.giou(boxops.cxcywh_to_xyxy(pboxes[q]), gbox)
            cost[g, q] = weights.cls * nll + weights.l1 * l1 + weights.giou * (1.0 - gi)
    return cost


def match_predictions(pred: DetectionSet, gt_boxes_xyxy: list, gt_classes: list[int],
                      weights: LossWeights) -> MatchResult:
    if not gt_boxes_xyxy:
        return MatchResult(assignment=(), total_cost=0.0)
    return hungarian_match(build_cost_matrix(pred, gt_boxes_xyxy, gt_classes, weights))


def detection_loss(pred: DetectionSet, gt_boxes_xyxy: list, gt_classes: list[int],
                   match: MatchResult, weights: LossWeights = LossWeights(),
                   no_object_weight: float = 0.1) -> tuple[Tensor, dict[str, float]]:
    """Scalar training loss plus a float breakdown of its components.

    Ground-truth boxes are corner boxes normalized to [0, 1]; L1 is taken in
    center/size space, gIoU in corner space.
    """
    weights.validate()
    if no_object_weight < 0:
        raise ValueError(f"no_object_weight must be non-negative, got {no_object_weight}")
    n_q, n_cls = pred.class_probs.shape

    target = np.zeros((n_q, n_cls))
    for g, q in match.assignment:
        target[q, gt_classes[g]] = weights.cls
    for q in range(n_q):
        if not target[q].any():
            target[q, NO_OBJECT] = weights.cls * no_object_weight
    cls_term = (-log(pred.class_probs) * Tensor(target)).sum()

    l1_term = None
    giou_term = None
    for g, q in match.assignment:
        pbox = narrow(pred.boxes, 0, q, 1).reshape((4,))
        g_cxcywh = np.array(boxops.xyxy_to_cxcywh(gt_boxes_xyxy[g]))
        pair_l1 = (pbox - Tensor(g_cxcywh)).abs().sum()
        pair_giou = 1.0 - giou_pair(pbox, gt_boxes_xyxy[g])
        l1_term = pair_l1 if l1_term is None else l1_term + pair_l1
        giou_term = pair_giou if giou_term is None else giou_term + pair_giou

    total = cls_term
    parts = {"cls": float(cls_term.data)}
    if l1_term is not None:
        total = total + weights.l1 * l1_term + weights.giou * giou_term
        parts["l1"] = float(l1_term.data)
        parts["giou"] = float(giou_term.data)
    else:
        parts["l1"] = 0.0
        parts["giou"] = 0.0
    parts["total"] = float(total.data)
    return total, parts


def video_class_loss(probs: Tensor, label_index: int) -> Tensor:
    """Negative log-likelihood of the true video label."""
    return -log(narrow(probs, 0, label_index, 1)).sum()
