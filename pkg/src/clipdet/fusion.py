"""Attention fusion blocks operating on feature pyramids.

Inter fusion merges a frame's local-stream feature map with its
shuffled-stream counterpart; intra fusion merges the three fused maps of a
clip across time. Both build an hw x hw similarity matrix between spatial
positions, normalize each row with a softmax, and mix a channel projection
of one input by the transposed attention.

Orientation convention: a ``c x h x w`` map is viewed as the row-major
``c x hw`` matrix; the position-by-channel form ``hw x c`` is its
transpose, so each row keeps the channel vector of one spatial position.
Channel projections are linear layers applied per position (equivalent to
1x1 convolutions) and preserve the channel width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    linear,
    matmul,
    parameter,
    reshape,
    softmax,
    transpose,
)
from .backbone import FeaturePyramid

SIMILARITY_MODES = ("eq", "text")


@dataclass
class ChannelProjection:
    """One linear layer on the channel dimension (width-preserving)."""

    weight: Tensor  # c x c
    bias: Tensor  # c


@dataclass
class InterLevelWeights:
    hat: ChannelProjection
    tilde: ChannelProjection


@dataclass
class IntraLevelWeights:
    prev: ChannelProjection
    cur: ChannelProjection
    next: ChannelProjection


def _positions(x: Tensor) -> Tensor:
    """c x h x w -> hw x c (rows are spatial positions)."""
    c, h, w = x.shape
    return transpose(reshape(x, (c, h * w)))


def _init_projection(rng: np.random.Generator, dim: int, identity_scale: float = 0.02) -> ChannelProjection:
    # near-identity start: the fused map begins close to an attention-smoothed
    # copy of its input instead of a random channel mixture
    w = np.eye(dim) + rng.normal(0.0, identity_scale / np.sqrt(dim), size=(dim, dim))
    return ChannelProjection(weight=parameter(w), bias=parameter(np.zeros(dim)))


def inter_fuse_level(local: Tensor, global_: Tensor, weights: InterLevelWeights,
                     similarity: str = "eq", residual: bool = False) -> Tensor:
    """Fuse one pyramid level of the local stream with the shuffled stream.

    The similarity matrix is ``softmax(positions(global) @ positions(proj_tilde(local)).T)``
    row-wise; the output mixes ``proj_hat(local)`` by the transposed attention.
    ``similarity="text"`` swaps the query side to the unprojected local map.
    """
    if local.shape != global_.shape:
        raise ShapeError(f"stream shapes differ: local {local.shape} vs global {global_.shape}")
    if similarity not in SIMILARITY_MODES:
        raise ValueError(f"similarity must be one of {SIMILARITY_MODES}, got {similarity!r}")
    c, h, w = local.shape
    pos_local = _positions(local)  # hw x c
    l_hat = linear(pos_local, weights.hat.weight, weights.hat.bias)
    l_tilde = linear(pos_local, weights.tilde.weight, weights.tilde.bias)
    queries = _positions(global_) if similarity == "eq" else pos_local
    attn = softmax(matmul(queries, transpose(l_tilde)), axis=-1)  # hw x hw
    fused = matmul(transpose(l_hat), transpose(attn))  # c x hw
    out = reshape(fused, (c, h, w))
    if residual:
        out = out + local
    return out


def intra_fuse_level(p_prev: Tensor, p_cur: Tensor, p_next: Tensor,
                     weights: IntraLevelWeights, residual: bool = False) -> Tensor:
    """Fuse one pyramid level across the three frames of a clip.

    Similarity comes from the projected current and next maps; the projected
    previous map is mixed by the transposed attention.
    """
    if not (p_prev.shape == p_cur.shape == p_next.shape):
        raise ShapeError(
            f"clip level shapes differ: {p_prev.shape}, {p_cur.shape}, {p_next.shape}"
        )
    c, h, w = p_cur.shape
    hat_prev = linear(_positions(p_prev), weights.prev.weight, weights.prev.bias)
    hat_cur = linear(_positions(p_cur), weights.cur.weight, weights.cur.bias)
    hat_next = linear(_positions(p_next), weights.next.weight, weights.next.bias)
    attn = softmax(matmul(hat_cur, transpose(hat_next)), axis=-1)  # hw x hw
    fused = matmul(transpose(hat_prev), transpose(attn))  # c x hw
    out = reshape(fused, (c, h, w))
    if residual:
        out = out + p_cur
    return out


class InterVideoFusion:
    """Three per-level attention blocks merging local and shuffled streams."""

    def __init__(self, rng: np.random.Generator, dim: int, num_levels: int = 3,
                 similarity: str = "eq", residual: bool = False):
        if similarity not in SIMILARITY_MODES:
            raise ValueError(f"similarity must be one of {SIMILARITY_MODES}, got {similarity!r}")
        self.similarity = similarity
        self.residual = residual
        self.levels = [
            InterLevelWeights(hat=_init_projection(rng, dim), tilde=_init_projection(rng, dim))
            for _ in range(num_levels)
        ]

    def params(self) -> dict[str, Tensor]:
        out = {}
        for i, lv in enumerate(self.levels, start=1):
            out[f"level{i}.hat.w"] = lv.hat.weight
            out[f"level{i}.hat.b"] = lv.hat.bias
            out[f"level{i}.tilde.w"] = lv.tilde.weight
            out[f"level{i}.tilde.b"] = lv.tilde.bias
        return out

    def fuse(self, local: FeaturePyramid, global_: FeaturePyramid) -> FeaturePyramid:
        if len(local.levels) != len(self.levels) or len(global_.levels) != len(self.levels):
            raise ShapeError(
                f"pyramid has {len(local.levels)}/{len(global_.levels)} levels, fusion expects {len(self.levels)}"
            )
        fused = tuple(
            inter_fuse_level(l, g, w, self.similarity, self.residual)
            for l, g, w in zip(local.levels, global_.levels, self.levels)
        )
        return FeaturePyramid(fused)


class IntraVideoFusion:
    """Three per-level attention blocks merging a clip's fused frames."""

    def __init__(self, rng: np.random.Generator, dim: int, num_levels: int = 3,
                 residual: bool = False):
        self.residual = residual
        self.levels = [
            IntraLevelWeights(
                prev=_init_projection(rng, dim),
                cur=_init_projection(rng, dim),
                next=_init_projection(rng, dim),
            )
            for _ in range(num_levels)
        ]

    def params(self) -> dict[str, Tensor]:
        out = {}
        for i, lv in enumerate(self.levels, start=1):
            for tag in ("prev", "cur", "next"):
                proj: ChannelProjection = getattr(lv, tag)
                out[f"level{i}.{tag}.w"] = proj.weight
                out[f"level{i}.{tag}.b"] = proj.bias
        return out

    def fuse(self, prev: FeaturePyramid, cur: FeaturePyramid, nxt: FeaturePyramid) -> FeaturePyramid:
        for pyr in (prev, cur, nxt):
            if len(pyr.levels) != len(self.levels):
                raise ShapeError(
                    f"pyramid has {len(pyr.levels)} levels, fusion expects {len(self.levels)}"
                )
        fused = tuple(
            intra_fuse_level(p, c, n, w, self.residual)
            for p, c, n, w in zip(prev.levels, cur.levels, nxt.levels, self.levels)
        )
        return FeaturePyramid(fused)
