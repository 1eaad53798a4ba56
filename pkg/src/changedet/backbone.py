"""Siamese hierarchical window-attention encoder.

Produces a five-level feature pyramid per image at strides {4, 8, 16, 32, 32},
every level reduced to a common channel width. Both temporal branches share one
parameter store.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .grids import ConfigurationError, FeaturePyramid, InvalidInputError, TokenGrid


@dataclass
class EncoderConfig:
    patch_size: int = 4
    embed_dim: int = 32
    stage_depths: Tuple[int, int, int, int] = (2, 2, 2, 2)
    stage_heads: Tuple[int, int, int, int] = (2, 4, 8, 8)
    window_size: int = 4
    extra_stage_depth: int = 1
    reduce_to: int = 32
    mlp_ratio: float = 4.0

    def validate(self) -> None:
        if self.patch_size < 1 or self.embed_dim < 1 or self.window_size < 1:
            raise ConfigurationError("patch_size, embed_dim and window_size must be >= 1")
        if len(self.stage_depths) != 4 or len(self.stage_heads) != 4:
            raise ConfigurationError("stage_depths and stage_heads must list 4 stages")
        for i, heads in enumerate(self.stage_heads):
            dim = self.embed_dim * 2 ** i
            if dim % heads != 0:
                raise ConfigurationError(f"stage {i + 1} dim {dim} not divisible by {heads} heads")


def init_transformer_weights(module: nn.Module) -> None:
    """Truncated-normal init for projections, identity for norms."""
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.Conv2d, nn.Conv1d)):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.LayerNorm, nn.BatchNorm2d)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def window_partition(x: torch.Tensor, window_size: int) -> torch.Tensor:
    """Split a grid into non-overlapping windows.

    Args:
        x: (B, H, W, C) with H, W multiples of window_size
    Returns:
        (num_windows * B, window_size * window_size, C)
    """
    B, H, W, C = x.shape
    x = x.view(B, H // window_size, window_size, W // window_size, window_size, C)
    windows = x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window_size * window_size, C)
    return windows


def window_reverse(windows: torch.Tensor, window_size: int, H: int, W: int) -> torch.Tensor:
    """Inverse of window_partition.

    Args:
        windows: (num_windows * B, window_size * window_size, C)
    Returns:
        (B, H, W, C)
    """
    C = windows.shape[-1]
    B = windows.shape[0] * window_size * window_size // (H * W)
    x = windows.view(B, H // window_size, W // window_size, window_size, window_size, C)
    x = x.permute(0, 1, 3, 2, 4, 5).reshape(B, H, W, C)
    return x


def relative_position_index(window_size: int) -> torch.Tensor:
    """Pairwise relative-position lookup indices for one window, shape (N, N)."""
    coords = torch.stack(
        torch.meshgrid(
            torch.arange(window_size), torch.arange(window_size), indexing="ij"
        )
    )  # (2, ws, ws)
    coords = torch.flatten(coords, 1)  # (2, N)
    relative = coords[:, :, None] - coords[:, None, :]  # (2, N, N)
    relative = relative.permute(1, 2, 0).contiguous()
    relative[:, :, 0] += window_size - 1
    relative[:, :, 1] += window_size - 1
    relative[:, :, 0] *= 2 * window_size - 1
    return relative.sum(-1)  # (N, N)


class WindowAttention(nn.Module):
    """(Shifted) window multi-head self-attention with pre-norm and residual add.

    Computes LN -> cyclic shift (iff shift > 0) -> windowed MHSA with relative
    position bias and seam masking -> inverse shift -> residual. Grids that are
    not window-aligned are zero-padded on the right/bottom and cropped back.
    """

    def __init__(self, dim: int, num_heads: int, window_size: int, shift: int = 0):
        super().__init__()
        if dim % num_heads != 0:
            raise ConfigurationError(f"dim {dim} not divisible by num_heads {num_heads}")
        if shift not in (0, window_size // 2):
            raise ConfigurationError(f"shift must be 0 or {window_size // 2}, got {shift}")
        self.dim = dim
        self.num_heads = num_heads
        self.window_size = window_size
        self.shift = shift
        self.scale = (dim // num_heads) ** -0.5

        self.norm = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        # one bias per relative offset per head; zero-initialised
        self.relative_bias_table = nn.Parameter(
            torch.zeros((2 * window_size - 1) ** 2, num_heads)
        )
        self.register_buffer("relative_index", relative_position_index(window_size), persistent=False)

    def _shift_mask(self, Hp: int, Wp: int, device, dtype) -> torch.Tensor:
        """Additive mask forbidding attention across pre-shift window seams.

        Returns (num_windows, N, N) with 0 for allowed pairs and -inf otherwise.
        """
        ws, s = self.window_size, self.shift
        img_mask = torch.zeros((1, Hp, Wp, 1), device=device)
        cnt = 0
        for h in (slice(0, -ws), slice(-ws, -s), slice(-s, None)):
            for w in (slice(0, -ws), slice(-ws, -s), slice(-s, None)):
                img_mask[:, h, w, :] = cnt
                cnt += 1
        mask_windows = window_partition(img_mask, ws).squeeze(-1)  # (nW, N)
        diff = mask_windows.unsqueeze(1) - mask_windows.unsqueeze(2)
        attn_mask = torch.zeros_like(diff, dtype=dtype)
        attn_mask.masked_fill_(diff != 0, float("-inf"))
        return attn_mask

    def _attention(self, windows: torch.Tensor, mask: torch.Tensor | None) -> Tuple[torch.Tensor, torch.Tensor]:
        """Multi-head attention inside each window.

        Args:
            windows: (B * nW, N, C)
            mask: (nW, N, N) additive mask or None
        Returns:
            output (B * nW, N, C) and attention probabilities (B * nW, heads, N, N)
        """
        Bn, N, C = windows.shape
        qkv = self.qkv(windows).reshape(Bn, N, 3, self.num_heads, C // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)  # each (Bn, heads, N, dh)
        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.relative_bias_table[self.relative_index.view(-1)]
        bias = bias.view(N, N, self.num_heads).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nW = mask.shape[0]
            attn = attn.view(Bn // nW, nW, self.num_heads, N, N) + mask.unsqueeze(0).unsqueeze(2)
            attn = attn.view(Bn, self.num_heads, N, N)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(Bn, N, C)
        return self.proj(out), attn

    def _windowed(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Normalise, shift, partition and attend; returns (grid, attn probs)."""
        B, H, W, C = x.shape
        if C != self.dim:
            raise ConfigurationError(f"expected {self.dim} channels, got {C}")
        ws = self.window_size
        x = self.norm(x)
        pad_b = (ws - H % ws) % ws
        pad_r = (ws - W % ws) % ws
        if pad_b or pad_r:
            x = F.pad(x, (0, 0, 0, pad_r, 0, pad_b))
        Hp, Wp = x.shape[1], x.shape[2]
        if self.shift > 0:
            x = torch.roll(x, shifts=(-self.shift, -self.shift), dims=(1, 2))
            mask = self._shift_mask(Hp, Wp, x.device, x.dtype)
        else:
            mask = None
        windows = window_partition(x, ws)
        out, attn = self._attention(windows, mask)
        x = window_reverse(out, ws, Hp, Wp)
        if self.shift > 0:
            x = torch.roll(x, shifts=(self.shift, self.shift), dims=(1, 2))
        if pad_b or pad_r:
            x = x[:, :H, :W, :]
        return x, attn

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self._windowed(x)
        return x + out

    def attention_weights(self, x: torch.Tensor) -> torch.Tensor:
        """Post-softmax attention probabilities, (B * nW, heads, N, N)."""
        _, attn = self._windowed(x)
        return attn


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class SwinBlock(nn.Module):
    """One attention block and its MLP: x + attn(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, num_heads: int, window_size: int, shift: int,
                 mlp_ratio: float = 4.0):
        super().__init__()
        self.attn = WindowAttention(dim, num_heads, window_size, shift)
        self.norm = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.attn(x)
        x = x + self.mlp(self.norm(x))
        return x


class SwinBlockPair(nn.Module):
    """Plain-window block followed by its shifted-window partner."""

    def __init__(self, dim: int, num_heads: int, window_size: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.w_block = SwinBlock(dim, num_heads, window_size, shift=0, mlp_ratio=mlp_ratio)
        self.sw_block = SwinBlock(dim, num_heads, window_size, shift=window_size // 2,
                                  mlp_ratio=mlp_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.sw_block(self.w_block(x))


class SwinStage(nn.Module):
    """A run of blocks at one resolution, alternating window and shifted window."""

    def __init__(self, dim: int, depth: int, num_heads: int, window_size: int,
                 mlp_ratio: float = 4.0):
        super().__init__()
        self.blocks = nn.ModuleList(
            SwinBlock(dim, num_heads, window_size,
                      shift=0 if i % 2 == 0 else window_size // 2,
                      mlp_ratio=mlp_ratio)
            for i in range(depth)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class PatchEmbed(nn.Module):
    """Linear projection of non-overlapping patch_size x patch_size pixel patches."""

    def __init__(self, patch_size: int, embed_dim: int, in_channels: int = 3):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv2d(in_channels, embed_dim, kernel_size=patch_size, stride=patch_size)
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """Args: image (B, 3, H, W). Returns (B, H/ps, W/ps, C)."""
        if image.dim() != 4 or image.shape[2] < 1 or image.shape[3] < 1:
            raise InvalidInputError(f"expected (B, C, H, W) image, got {tuple(image.shape)}")
        ps = self.patch_size
        pad_b = (ps - image.shape[2] % ps) % ps
        pad_r = (ps - image.shape[3] % ps) % ps
        if pad_b or pad_r:
            image = F.pad(image, (0, pad_r, 0, pad_b))
        x = self.proj(image).permute(0, 2, 3, 1)  # (B, H/ps, W/ps, C)
        return self.norm(x)


class PatchMerging(nn.Module):
    """2x2 neighbourhood concatenation followed by linear reduction 4c -> 2c."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, H, W, C = x.shape
        if H % 2 or W % 2:
            x = F.pad(x, (0, 0, 0, W % 2, 0, H % 2))
        x0 = x[:, 0::2, 0::2, :]
        x1 = x[:, 1::2, 0::2, :]
        x2 = x[:, 0::2, 1::2, :]
        x3 = x[:, 1::2, 1::2, :]
        x = torch.cat([x0, x1, x2, x3], dim=-1)
        return self.reduction(self.norm(x))


class ChannelReduce(nn.Module):
    """Per-token linear projection to a common channel width."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.proj = nn.Linear(in_dim, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(x)


class SiameseEncoder(nn.Module):
    """Shared-weight encoder emitting five levels at strides {4, 8, 16, 32, 32}.

    Stages 1-4 form the standard halving hierarchy; stage 5 runs extra blocks at
    stride 32 to enlarge the receptive field without further downsampling. Every
    level is projected to cfg.reduce_to channels.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        dims = [cfg.embed_dim * 2 ** i for i in range(4)]
        self.patch_embed = PatchEmbed(cfg.patch_size, cfg.embed_dim)
        self.stages = nn.ModuleList(
            SwinStage(dims[i], cfg.stage_depths[i], cfg.stage_heads[i],
                      cfg.window_size, cfg.mlp_ratio)
            for i in range(4)
        )
        self.merges = nn.ModuleList(PatchMerging(dims[i]) for i in range(3))
        self.extra_stage = SwinStage(dims[3], cfg.extra_stage_depth, cfg.stage_heads[3],
                                     cfg.window_size, cfg.mlp_ratio)
        level_dims = [dims[0], dims[1], dims[2], dims[3], dims[3]]
        self.reduces = nn.ModuleList(ChannelReduce(d, cfg.reduce_to) for d in level_dims)
        self.apply(init_transformer_weights)

    def forward(self, image: torch.Tensor) -> FeaturePyramid:
        ps = self.cfg.patch_size
        x = self.patch_embed(image)
        levels = []
        for i in range(4):
            x = self.stages[i](x)
            levels.append((x, ps * 2 ** i))
            if i < 3:
                x = self.merges[i](x)
        x = self.extra_stage(x)
        levels.append((x, ps * 8))
        return [
            TokenGrid(self.reduces[k](feat), stride)
            for k, (feat, stride) in enumerate(levels)
        ]

    def encode_pair(self, image_a: torch.Tensor, image_b: torch.Tensor
                    ) -> Tuple[FeaturePyramid, FeaturePyramid]:
        """Encode both temporal phases with the same parameter store."""
        if image_a.shape != image_b.shape:
            raise InvalidInputError(
                f"image pair dimension mismatch: {tuple(image_a.shape)} vs {tuple(image_b.shape)}"
            )
        return self(image_a), self(image_b)
