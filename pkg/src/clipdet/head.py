"""Set-prediction head: learned queries attend over the flattened pyramid.

All pyramid levels are flattened into one token sequence with additive 2-D
sine positional encodings and learned per-level embeddings, run through a
small pre-norm transformer encoder, and decoded by N learned queries. Each
query emits class probabilities over {benign, malignant, no-object} and a
center/size box squashed into (0, 1). The concatenation of encoder tokens
and decoded queries is the long-range feature used by the video-level
benign/malignant classifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    concat,
    linear,
    matmul,
    narrow,
    parameter,
    relu,
    reshape,
    sigmoid,
    softmax,
    standardize,
    transpose,
)
from .backbone import FeaturePyramid

CLASS_NAMES = ("benign", "malignant")
NO_OBJECT = len(CLASS_NAMES)  # index of the no-object class


@dataclass
class DetectionSet:
    """Per-query class probabilities [N x 3] and cxcywh boxes [N x 4]."""

    class_probs: Tensor
    boxes: Tensor

    @property
    def num_queries(self) -> int:
        return self.class_probs.shape[0]


@dataclass
class LongRangeFeature:
    """Encoder tokens plus decoded query slots, and their mean pooling."""

    tokens: Tensor  # (sum_i h_i*w_i + N) x d
    pooled: Tensor  # d


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize along the last axis without learned scale/shift."""
    return standardize(x, axis=-1, eps=eps)


_PE_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def sine_positions_2d(h: int, w: int, dim: int) -> np.ndarray:
    """Fixed 2-D sine/cosine position table of shape (h*w, dim)."""
    key = (h, w, dim)
    cached = _PE_CACHE.get(key)
    if cached is not None:
        return cached
    if dim % 4 != 0:
        raise ShapeError(f"position encoding dim must be divisible by 4, got {dim}")
    quarter = dim // 4
    freqs = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    ys = (np.arange(h) + 0.5) / h * 2.0 * np.pi
    xs = (np.arange(w) + 0.5) / w * 2.0 * np.pi
    y_ang = ys[:, None] * freqs[None, :]  # h x quarter
    x_ang = xs[:, None] * freqs[None, :]
    y_part = np.concatenate([np.sin(y_ang), np.cos(y_ang)], axis=1)  # h x dim/2
    x_part = np.concatenate([np.sin(x_ang), np.cos(x_ang)], axis=1)
    table = np.concatenate(
        [
            np.repeat(y_part, w, axis=0),
            np.tile(x_part, (h, 1)),
        ],
        axis=1,
    )
    _PE_CACHE[key] = table
    return table


def _linear_init(rng: np.random.Generator, d_in: int, d_out: int) -> Tensor:
    std = math.sqrt(2.0 / (d_in + d_out))
    return parameter(rng.normal(0.0, std, size=(d_in, d_out)))


class MultiHeadAttention:
    def __init__(self, rng: np.random.Generator, dim: int, num_heads: int):
        if dim % num_heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.wq = _linear_init(rng, dim, dim)
        self.wk = _linear_init(rng, dim, dim)
        self.wv = _linear_init(rng, dim, dim)
        self.wo = _linear_init(rng, dim, dim)
        self.bq = parameter(np.zeros(dim))
        self.bk = parameter(np.zeros(dim))
        self.bv = parameter(np.zeros(dim))
        self.bo = parameter(np.zeros(dim))

    def params(self) -> dict[str, Tensor]:
        return {
            "wq": self.wq, "bq": self.bq, "wk": self.wk, "bk": self.bk,
            "wv": self.wv, "bv": self.bv, "wo": self.wo, "bo": self.bo,
        }

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        q = linear(queries, self.wq, self.bq)
        k = linear(keys_values, self.wk, self.bk)
        v = linear(keys_values, self.wv, self.bv)
        scale = 1.0 / math.sqrt(self.head_dim)
        heads = []
        for i in range(self.num_heads):
            lo = i * self.head_dim
            qh = narrow(q, 1, lo, self.head_dim)
            kh = narrow(k, 1, lo, self.head_dim)
            vh = narrow(v, 1, lo, self.head_dim)
            attn = softmax(matmul(qh, transpose(kh)) * scale, axis=-1)
            heads.append(matmul(attn, vh))
        return linear(concat(heads, axis=1), self.wo, self.bo)


class FeedForward:
    def __init__(self, rng: np.random.Generator, dim: int, hidden: int):
        self.w1 = _linear_init(rng, dim, hidden)
        self.b1 = parameter(np.zeros(hidden))
        self.w2 = _linear_init(rng, hidden, dim)
        self.b2 = parameter(np.zeros(dim))

    def params(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def __call__(self, x: Tensor) -> Tensor:
        return linear(relu(linear(x, self.w1, self.b1)), self.w2, self.b2)


class EncoderLayer:
    def __init__(self, rng, dim, num_heads, ffn_dim):
        self.attn = MultiHeadAttention(rng, dim, num_heads)
        self.ffn = FeedForward(rng, dim, ffn_dim)

    def params(self) -> dict[str, Tensor]:
        out = {f"attn.{k}": v for k, v in self.attn.params().items()}
        out.update({f"ffn.{k}": v for k, v in self.ffn.params().items()})
        return out

    def __call__(self, x: Tensor) -> Tensor:
        normed = layer_norm(x)
        x = x + self.attn(normed, normed)
        x = x + self.ffn(layer_norm(x))
        return x


class DecoderLayer:
    def __init__(self, rng, dim, num_heads, ffn_dim):
        self.self_attn = MultiHeadAttention(rng, dim, num_heads)
        self.cross_attn = MultiHeadAttention(rng, dim, num_heads)
        self.ffn = FeedForward(rng, dim, ffn_dim)

    def params(self) -> dict[str, Tensor]:
        out = {f"self.{k}": v for k, v in self.self_attn.params().items()}
        out.update({f"cross.{k}": v for k, v in self.cross_attn.params().items()})
        out.update({f"ffn.{k}": v for k, v in self.ffn.params().items()})
        return out

    def __call__(self, q: Tensor, memory: Tensor) -> Tensor:
        normed = layer_norm(q)
        q = q + self.self_attn(normed, normed)
        q = q + self.cross_attn(layer_norm(q), memory)
        q = q + self.ffn(layer_norm(q))
        return q


class DetectionHead:
    """Transformer over multi-scale tokens with N learned query slots."""

    def __init__(self, rng: np.random.Generator, dim: int = 64, num_queries: int = 10,
                 num_heads: int = 4, enc_layers: int = 2, dec_layers: int = 2,
                 ffn_dim: int = 128, num_levels: int = 3):
        self.dim = dim
        self.num_queries = num_queries
        self.queries = parameter(rng.normal(0.0, 1.0 / math.sqrt(dim), size=(num_queries, dim)))
        self.level_embed = parameter(rng.normal(0.0, 0.02, size=(num_levels, dim)))
        self.encoder = [EncoderLayer(rng, dim, num_heads, ffn_dim) for _ in range(enc_layers)]
        self.decoder = [DecoderLayer(rng, dim, num_heads, ffn_dim) for _ in range(dec_layers)]
        self.cls_w = _linear_init(rng, dim, len(CLASS_NAMES) + 1)
        self.cls_b = parameter(np.zeros(len(CLASS_NAMES) + 1))
        self.box_w1 = _linear_init(rng, dim, dim)
        self.box_b1 = parameter(np.zeros(dim))
        self.box_w2 = _linear_init(rng, dim, 4)
        self.box_b2 = parameter(np.zeros(4))  # sigmoid(0) = 0.5: boxes start centered

    def params(self) -> dict[str, Tensor]:
        out = {
            "queries": self.queries,
            "level_embed": self.level_embed,
            "cls.w": self.cls_w, "cls.b": self.cls_b,
            "box.w1": self.box_w1, "box.b1": self.box_b1,
            "box.w2": self.box_w2, "box.b2": self.box_b2,
        }
        for i, layer in enumerate(self.encoder, start=1):
            out.update({f"enc{i}.{k}": v for k, v in layer.params().items()})
        for i, layer in enumerate(self.decoder, start=1):
            out.update({f"dec{i}.{k}": v for k, v in layer.params().items()})
        return out

    def _tokens(self, pyramid: FeaturePyramid) -> Tensor:
        parts = []
        for i, level in enumerate(pyramid.levels):
            c, h, w = level.shape
            if c != self.dim:
                raise ShapeError(f"pyramid level width {c} != head width {self.dim}")
            pos = sine_positions_2d(h, w, self.dim)
            tok = transpose(reshape(level, (c, h * w)))  # hw x d
            tok = tok + Tensor(pos) + narrow(self.level_embed, 0, i, 1)
            parts.append(tok)
        return concat(parts, axis=0)

    def forward(self, pyramid: FeaturePyramid) -> tuple[DetectionSet, LongRangeFeature]:
        tokens = self._tokens(pyramid)
        for layer in self.encoder:
            tokens = layer(tokens)
        q = self.queries
        for layer in self.decoder:
            q = layer(q, tokens)
        q = layer_norm(q)
        probs = softmax(linear(q, self.cls_w, self.cls_b), axis=-1)
        boxes = sigmoid(linear(relu(linear(q, self.box_w1, self.box_b1)), self.box_w2, self.box_b2))
        z = concat([tokens, q], axis=0)
        return DetectionSet(probs, boxes), LongRangeFeature(tokens=z, pooled=z.mean(axis=0))


class VideoClassifier:
    """Benign/malignant head on the pooled long-range feature."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.w = _linear_init(rng, dim, len(CLASS_NAMES))
        self.b = parameter(np.zeros(len(CLASS_NAMES)))

    def params(self) -> dict[str, Tensor]:
        return {"w": self.w, "b": self.b}

    def __call__(self, feature: LongRangeFeature) -> Tensor:
        pooled = reshape(feature.pooled, (1, feature.pooled.shape[0]))
        logits = linear(pooled, self.w, self.b)
        return reshape(softmax(logits, axis=-1), (len(CLASS_NAMES),))
