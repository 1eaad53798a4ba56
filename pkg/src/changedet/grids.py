"""Spatial token grids: the tensor currency passed between model stages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import torch


class InvalidInputError(ValueError):
    """Raised when an operation receives dimensionally inconsistent inputs."""


class ConfigurationError(ValueError):
    """Raised when module configuration and data disagree (e.g. channel mismatch)."""


@dataclass
class TokenGrid:
    """A grid of feature vectors at a fixed stride relative to the input image.

    values has shape (batch, height, width, channels); stride is the number of
    input pixels covered by one token side.
    """

    values: torch.Tensor
    stride: int

    def __post_init__(self):
        if self.values.dim() != 4:
            raise InvalidInputError(
                f"token grid expects (B, H, W, C) values, got shape {tuple(self.values.shape)}"
            )
        if self.stride < 1:
            raise InvalidInputError(f"stride must be >= 1, got {self.stride}")

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def channels(self) -> int:
        return self.values.shape[3]

    def with_values(self, values: torch.Tensor, stride: int | None = None) -> "TokenGrid":
        return TokenGrid(values, self.stride if stride is None else stride)

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.values).all())


FeaturePyramid = List[TokenGrid]


def check_level_alignment(a: FeaturePyramid, b: FeaturePyramid) -> None:
    """Ensure two pyramids agree level by level in shape and stride."""
    if len(a) != len(b):
        raise InvalidInputError(f"pyramid level count mismatch: {len(a)} vs {len(b)}")
    for k, (ga, gb) in enumerate(zip(a, b)):
        if ga.values.shape != gb.values.shape or ga.stride != gb.stride:
            raise InvalidInputError(
                f"pyramid level {k + 1} mismatch: "
                f"{tuple(ga.values.shape)}/s{ga.stride} vs {tuple(gb.values.shape)}/s{gb.stride}"
            )
