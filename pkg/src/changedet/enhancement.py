"""Deep feature enhancement: per-level summation/difference fusion with contrast features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import torch
import torch.nn as nn
import torch.nn.functional as F

from .grids import FeaturePyramid, InvalidInputError, TokenGrid, check_level_alignment


@dataclass
class EnhancedLevel:
    """Sum and difference branches of one pyramid level, each with 2C channels."""

    sum_features: TokenGrid
    diff_features: TokenGrid
    level: int


class FuseConv(nn.Module):
    """ReLU(BN(Conv1x1(e1 +/- e2))); channel count preserved."""

    def __init__(self, channels: int, mode: str):
        super().__init__()
        if mode not in ("sum", "diff"):
            raise ValueError(f"mode must be 'sum' or 'diff', got {mode!r}")
        self.mode = mode
        # no conv bias: the following BN's mean subtraction would null it anyway
        self.conv = nn.Conv2d(channels, channels, kernel_size=1, bias=False)
        self.bn = nn.BatchNorm2d(channels)

    def forward(self, e1: torch.Tensor, e2: torch.Tensor) -> torch.Tensor:
        if e1.shape != e2.shape:
            raise InvalidInputError(
                f"fuse operands differ in shape: {tuple(e1.shape)} vs {tuple(e2.shape)}"
            )
        x = e1 + e2 if self.mode == "sum" else e1 - e2
        x = x.permute(0, 3, 1, 2)  # BHWC -> BCHW for conv/BN
        x = F.relu(self.bn(self.conv(x)))
        return x.permute(0, 2, 3, 1)


def contrast(e: torch.Tensor) -> torch.Tensor:
    """Concatenate each feature with its deviation from the local 3x3 average.

    Zero padding at the border, so border contrast is nonzero even for constant
    inputs. Channels double; spatial dims are preserved.
    """
    x = e.permute(0, 3, 1, 2)
    pooled = F.avg_pool2d(x, kernel_size=3, stride=1, padding=1, count_include_pad=True)
    out = torch.cat([x, x - pooled], dim=1)
    return out.permute(0, 2, 3, 1)


class LevelEnhancer(nn.Module):
    """Sum and diff branches of one level, each fused then contrast-augmented."""

    def __init__(self, channels: int):
        super().__init__()
        self.fuse_sum = FuseConv(channels, "sum")
        self.fuse_diff = FuseConv(channels, "diff")

    def forward(self, e1: TokenGrid, e2: TokenGrid, level: int) -> EnhancedLevel:
        summed = contrast(self.fuse_sum(e1.values, e2.values))
        diffed = contrast(self.fuse_diff(e1.values, e2.values))
        return EnhancedLevel(
            sum_features=e1.with_values(summed),
            diff_features=e1.with_values(diffed),
            level=level,
        )


class DeepFeatureEnhancement(nn.Module):
    """Per-level enhancement of the two temporal pyramids.

    Fuse parameters are learned separately per level and per mode; sharing them
    would couple scales.
    """

    def __init__(self, channels: int, num_levels: int = 5):
        super().__init__()
        self.levels = nn.ModuleList(LevelEnhancer(channels) for _ in range(num_levels))

    def forward(self, pyramid_a: FeaturePyramid, pyramid_b: FeaturePyramid) -> List[EnhancedLevel]:
        check_level_alignment(pyramid_a, pyramid_b)
        if len(pyramid_a) != len(self.levels):
            raise InvalidInputError(
                f"expected {len(self.levels)} levels, got {len(pyramid_a)}"
            )
        return [
            enhancer(ga, gb, level=k + 1)
            for k, (enhancer, ga, gb) in enumerate(zip(self.levels, pyramid_a, pyramid_b))
        ]
