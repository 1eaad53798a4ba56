"""Full change-detection network: Siamese encoder, feature enhancement, decoder, heads."""

from __future__ import annotations

from typing import List

import torch
import torch.nn as nn

from .backbone import EncoderConfig, SiameseEncoder, init_transformer_weights
from .decoder import (
    ChannelAttentionFuse,
    DecoderConfig,
    PredictionHeads,
    PredictionSet,
    ProgressiveDecoder,
    fuse_branches,
    pyramid_decode,
)
from .enhancement import DeepFeatureEnhancement
from .grids import InvalidInputError, TokenGrid


class ChangeDetectionNet(nn.Module):
    """Dual-phase image pair -> five side logit maps + one fused logit map.

    Variant switches: use_dfe replaces the enhancement stage with a plain
    concatenation of the two temporal features when off; use_pam bypasses the
    channel-attention gate; decoder picks the block-refined top-down path
    ("pcp") or a parameter-free upsample-and-add pyramid ("fp").
    """

    def __init__(self, encoder_cfg: EncoderConfig, decoder_cfg: DecoderConfig | None = None,
                 use_dfe: bool = True, use_pam: bool = True, decoder: str = "pcp"):
        super().__init__()
        if decoder not in ("pcp", "fp"):
            raise ValueError(f"decoder must be 'pcp' or 'fp', got {decoder!r}")
        self.use_dfe = use_dfe
        self.decoder_kind = decoder
        channels = encoder_cfg.reduce_to

        self.encoder = SiameseEncoder(encoder_cfg)
        self.dfe = DeepFeatureEnhancement(channels) if use_dfe else None
        # with DFE each branch carries 2C (feature + contrast); without it the
        # two temporal features are concatenated directly
        fuse_in = 4 * channels if use_dfe else 2 * channels
        self.fuse_levels = nn.ModuleList(
            ChannelAttentionFuse(fuse_in, channels, use_gate=use_pam) for _ in range(5)
        )
        if decoder == "pcp":
            self.decode = ProgressiveDecoder(channels, decoder_cfg or DecoderConfig())
        else:
            self.decode = None
        self.heads = PredictionHeads(channels)
        # one init pass over every submodule keeps the scheme uniform:
        # truncated-normal projections, zero biases, identity norms
        self.apply(init_transformer_weights)

    def fused_pyramid(self, image_a: torch.Tensor, image_b: torch.Tensor) -> List[TokenGrid]:
        pyr_a, pyr_b = self.encoder.encode_pair(image_a, image_b)
        fused = []
        if self.dfe is not None:
            for fuse, level in zip(self.fuse_levels, self.dfe(pyr_a, pyr_b)):
                fused.append(level.sum_features.with_values(fuse(fuse_branches(level))))
        else:
            for fuse, ga, gb in zip(self.fuse_levels, pyr_a, pyr_b):
                stacked = torch.cat([ga.values, gb.values], dim=-1)
                fused.append(ga.with_values(fuse(stacked)))
        return fused

    def forward(self, image_a: torch.Tensor, image_b: torch.Tensor) -> PredictionSet:
        if image_a.shape != image_b.shape:
            raise InvalidInputError(
                f"image pair dimension mismatch: {tuple(image_a.shape)} vs {tuple(image_b.shape)}"
            )
        out_size = (image_a.shape[-2], image_a.shape[-1])
        fused = self.fused_pyramid(image_a, image_b)
        decoded = self.decode(fused) if self.decode is not None else pyramid_decode(fused)
        return self.heads(decoded, out_size)
