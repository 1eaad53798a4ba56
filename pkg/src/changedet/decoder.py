"""Attention-gated pyramid decoder and prediction heads.

Fuses the sum/diff branches per level through a channel-attention module, then
decodes top-down: each finer level refines the coarser one with window-attention
blocks and patch unmerging before adding the level's fused features. Side heads
and a learned fusion head emit full-resolution logit maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import SwinStage, init_transformer_weights
from .enhancement import EnhancedLevel
from .grids import ConfigurationError, InvalidInputError, TokenGrid


@dataclass
class DecoderConfig:
    depths: Tuple[int, int, int, int] = (4, 4, 4, 4)  # blocks per transition, coarse to fine
    num_heads: int = 4
    window_size: int = 4
    mlp_ratio: float = 4.0

    def validate(self, channels: int) -> None:
        if len(self.depths) != 4 or any(d < 1 for d in self.depths):
            raise ConfigurationError("decoder depths must be 4 positive block counts")
        if channels % self.num_heads != 0:
            raise ConfigurationError(
                f"decoder channels {channels} not divisible by {self.num_heads} heads"
            )


@dataclass
class PredictionSet:
    """Five side-output logit maps plus one fused logit map, all (B, 1, H, W)."""

    side_logits: List[torch.Tensor]
    fused_logits: torch.Tensor

    def probabilities(self) -> torch.Tensor:
        return torch.sigmoid(self.fused_logits)


class ChannelAttentionFuse(nn.Module):
    """Concat-fuse the two branches, then gate channels from globally pooled stats.

    F = ReLU(BN(Conv1x1(concat(E_S, E_D)))); output F * sigmoid(Conv(GAP(F))) + F.
    With use_gate=False the attention gate is bypassed and F is returned as is.
    """

    def __init__(self, in_channels: int, channels: int, use_gate: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.use_gate = use_gate
        # no conv bias: the following BN's mean subtraction would null it anyway
        self.fuse = nn.Conv2d(in_channels, channels, kernel_size=1, bias=False)
        self.bn = nn.BatchNorm2d(channels)
        self.gate = nn.Conv2d(channels, channels, kernel_size=1) if use_gate else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Args: x (B, H, W, in_channels). Returns (B, H, W, channels)."""
        if x.shape[-1] != self.in_channels:
            raise ConfigurationError(
                f"expected {self.in_channels} input channels, got {x.shape[-1]}"
            )
        f = x.permute(0, 3, 1, 2)
        f = F.relu(self.bn(self.fuse(f)))
        if self.gate is not None:
            pooled = f.mean(dim=(2, 3), keepdim=True)  # GAP over the spatial grid
            f = f * torch.sigmoid(self.gate(pooled)) + f
        return f.permute(0, 2, 3, 1)


def fuse_branches(level: EnhancedLevel) -> torch.Tensor:
    return torch.cat([level.sum_features.values, level.diff_features.values], dim=-1)


class PatchUnmerge(nn.Module):
    """Upsample by 2: linear expansion C -> 4C, then depth-to-space rearrangement."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.expand = nn.Linear(dim, 4 * dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, H, W, C = x.shape
        x = self.expand(x)
        x = x.view(B, H, W, 2, 2, C)
        x = x.permute(0, 1, 3, 2, 4, 5).reshape(B, 2 * H, 2 * W, C)
        return x


class ProgressiveDecoder(nn.Module):
    """Top-down refinement over the five fused levels.

    The coarsest level passes through unchanged. Each transition runs a stack of
    window-attention blocks, upsamples by patch unmerging, and adds the next
    level's fused features. The 5 -> 4 transition keeps stride 32 on both sides,
    so its upsampling step is the identity.
    """

    def __init__(self, channels: int, cfg: DecoderConfig):
        super().__init__()
        cfg.validate(channels)
        self.cfg = cfg
        self.stages = nn.ModuleList(
            SwinStage(channels, depth, cfg.num_heads, cfg.window_size, cfg.mlp_ratio)
            for depth in cfg.depths
        )
        # transitions: 5->4 (no unmerge), 4->3, 3->2, 2->1
        self.unmerges = nn.ModuleList(
            [nn.Identity()] + [PatchUnmerge(channels) for _ in range(3)]
        )
        self.apply(init_transformer_weights)

    def forward(self, fused: Sequence[TokenGrid]) -> List[TokenGrid]:
        if len(fused) != 5:
            raise InvalidInputError(f"expected 5 fused levels, got {len(fused)}")
        decoded = [None] * 5
        decoded[4] = fused[4]
        x = fused[4].values
        for i, (stage, unmerge) in enumerate(zip(self.stages, self.unmerges)):
            target = fused[3 - i]
            x = unmerge(stage(x))
            if x.shape[1] < target.height or x.shape[2] < target.width:
                raise InvalidInputError(
                    f"decoded level {4 - i} smaller than target: "
                    f"{tuple(x.shape)} vs {tuple(target.values.shape)}"
                )
            # ceil-padded merges can overshoot by one token; crop to the target grid
            x = x[:, : target.height, : target.width, :]
            x = x + target.values
            decoded[3 - i] = target.with_values(x)
        return decoded


def pyramid_decode(fused: Sequence[TokenGrid]) -> List[TokenGrid]:
    """Parameter-free top-down decode: bilinear upsample and add (plain FP)."""
    if len(fused) != 5:
        raise InvalidInputError(f"expected 5 fused levels, got {len(fused)}")
    decoded = [None] * 5
    decoded[4] = fused[4]
    x = fused[4].values
    for k in range(3, -1, -1):
        target = fused[k]
        if x.shape[1:3] != (target.height, target.width):
            x = F.interpolate(
                x.permute(0, 3, 1, 2),
                size=(target.height, target.width),
                mode="bilinear",
                align_corners=False,
            ).permute(0, 2, 3, 1)
        x = x + target.values
        decoded[k] = target.with_values(x)
    return decoded


class PredictionHeads(nn.Module):
    """Per-level 1x1 logit heads plus a learned fusion over the upsampled sides."""

    def __init__(self, channels: int, num_levels: int = 5):
        super().__init__()
        self.side_heads = nn.ModuleList(
            nn.Conv2d(channels, 1, kernel_size=1) for _ in range(num_levels)
        )
        self.fuse_head = nn.Conv2d(num_levels, 1, kernel_size=1)
        self.apply(init_transformer_weights)

    def forward(self, decoded: Sequence[TokenGrid], out_size: Tuple[int, int]) -> PredictionSet:
        sides = []
        for head, grid in zip(self.side_heads, decoded):
            logits = head(grid.values.permute(0, 3, 1, 2))
            if logits.shape[-2:] != out_size:
                logits = F.interpolate(logits, size=out_size, mode="bilinear",
                                       align_corners=False)
            sides.append(logits)
        fused = self.fuse_head(torch.cat(sides, dim=1))
        return PredictionSet(side_logits=sides, fused_logits=fused)
