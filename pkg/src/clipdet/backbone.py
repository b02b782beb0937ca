"""Small trainable convolutional backbone producing a three-level pyramid.

A stride-2 stem is followed by three stages of [conv3x3, activation,
conv3x3 stride 2]; the stage outputs (channels 32/64/128 by default) are
each projected to a shared width by 1x1 convolutions so the downstream
attention blocks see one channel count at every level. Normalization is
parameter-free per-channel standardization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, conv2d, parameter, relu, standardize


@dataclass
class FeaturePyramid:
    """Exactly three feature maps with halving spatial resolution."""

    levels: tuple[Tensor, Tensor, Tensor]

    def __post_init__(self):
        if len(self.levels) != 3:
            raise ShapeError(f"pyramid must have exactly 3 levels, got {len(self.levels)}")
        for lo, hi in zip(self.levels, self.levels[1:]):
            _, h0, w0 = lo.shape
            _, h1, w1 = hi.shape
            if not (h1 < h0 and w1 < w0):
                raise ShapeError("pyramid levels must strictly decrease in spatial size")
            if h1 != math.ceil(h0 / 2) or w1 != math.ceil(w0 / 2):
                raise ShapeError(
                    f"level sizes {h0}x{w0} -> {h1}x{w1} are not a halving step"
                )

    def shapes(self) -> list[tuple[int, int, int]]:
        return [lv.shape for lv in self.levels]


def channel_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each channel map over its spatial extent (no parameters)."""
    return standardize(x, axis=(1, 2), eps=eps)


def _conv_init(rng: np.random.Generator, cout: int, cin: int, k: int) -> Tensor:
    fan_in = cin * k * k
    std = math.sqrt(2.0 / fan_in)
    return parameter(rng.normal(0.0, std, size=(cout, cin, k, k)))


class Backbone:
    """Maps one grayscale frame to a three-level pyramid of shared width."""

    def __init__(self, rng: np.random.Generator, resolution: tuple[int, int],
                 channels: tuple[int, int, int] = (32, 64, 128), out_dim: int = 64):
        self.resolution = tuple(resolution)
        self.channels = tuple(channels)
        self.out_dim = out_dim
        c1, c2, c3 = channels
        self._params: dict[str, Tensor] = {}

        def conv(name, cout, cin, k):
            self._params[f"{name}.w"] = _conv_init(rng, cout, cin, k)
            self._params[f"{name}.b"] = parameter(np.zeros(cout))

        conv("stem", c1, 1, 3)
        for i, (cin, cout) in enumerate(((c1, c1), (c1, c2), (c2, c3)), start=1):
            conv(f"stage{i}.conv1", cout, cin, 3)
            conv(f"stage{i}.conv2", cout, cout, 3)
        for i, cin in enumerate((c1, c2, c3), start=1):
            conv(f"proj{i}", out_dim, cin, 1)

    def params(self) -> dict[str, Tensor]:
        return dict(self._params)

    def _apply(self, name: str, x: Tensor, stride: int, padding: int) -> Tensor:
        p = self._params
        return conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, padding=padding)

    def extract(self, frame) -> FeaturePyramid:
        """Frame (h, w) in [0, 1] -> pyramid of three out_dim-channel maps."""
        data = frame.data if isinstance(frame, Tensor) else np.asarray(frame, dtype=np.float64)
        if data.ndim == 2:
            if data.shape != self.resolution:
                raise ShapeError(f"frame is {data.shape}, backbone expects {self.resolution}")
            x = Tensor(data.reshape(1, *data.shape)) if not isinstance(frame, Tensor) else frame.reshape((1, *data.shape))
        elif data.ndim == 3 and data.shape[0] == 1:
            if data.shape[1:] != self.resolution:
                raise ShapeError(f"frame is {data.shape[1:]}, backbone expects {self.resolution}")
            x = frame if isinstance(frame, Tensor) else Tensor(data)
        else:
            raise ShapeError(f"expected a single grayscale frame, got shape {data.shape}")

        x = x * 2.0 - 1.0  # center pixel range
        x = relu(channel_norm(self._apply("stem", x, 2, 1)))
        levels = []
        for i in range(1, 4):
            x = relu(channel_norm(self._apply(f"stage{i}.conv1", x, 1, 1)))
            x = relu(channel_norm(self._apply(f"stage{i}.conv2", x, 2, 1)))
            levels.append(self._apply(f"proj{i}", x, 1, 0))
        return FeaturePyramid(tuple(levels))
