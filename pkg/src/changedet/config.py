"""Training configuration: one flat record covering architecture, loss and schedule."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, get_args, get_origin

from .backbone import EncoderConfig
from .decoder import DecoderConfig
from .grids import ConfigurationError
from .losses import LossConfig


@dataclass
class TrainConfig:
    # data
    data_root: str = ""          # empty -> seeded synthetic data
    input_size: int = 384
    tile_size: int = 256         # 0 -> never tile oversized scenes
    synth_count: int = 8
    augment: bool = True
    seed: int = 0
    out_dir: str = "runs/default"

    # architecture
    patch_size: int = 4
    embed_dim: int = 128
    stage_depths: Tuple[int, ...] = (2, 2, 18, 2)
    stage_heads: Tuple[int, ...] = (4, 8, 16, 32)
    window_size: int = 12
    extra_stage_depth: int = 2
    reduce_to: int = 128
    mlp_ratio: float = 4.0
    decoder_depths: Tuple[int, ...] = (4, 4, 4, 4)
    decoder_heads: int = 4

    # variant switches
    use_dfe: bool = True
    use_pam: bool = True
    decoder: str = "pcp"

    # loss
    use_wbce: bool = True
    use_ssim: bool = True
    use_siou: bool = True
    w0: float = 2.0
    ssim_window: int = 11
    alphas: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    weights_from_prediction: bool = False

    # optimisation
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 6
    epochs: int = 100
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 20
    new_layer_lr_multiplier: float = 10.0
    max_steps: int = 0           # 0 -> no step cap
    threshold: float = 0.5

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 (batch statistics)")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.decoder not in ("pcp", "fp"):
            raise ConfigurationError(f"decoder must be 'pcp' or 'fp', got {self.decoder!r}")
        if self.lr_decay_every < 1:
            raise ConfigurationError("lr_decay_every must be >= 1")
        self.encoder_config().validate()
        self.decoder_config().validate(self.reduce_to)
        return self

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            patch_size=self.patch_size,
            embed_dim=self.embed_dim,
            stage_depths=tuple(self.stage_depths),
            stage_heads=tuple(self.stage_heads),
            window_size=self.window_size,
            extra_stage_depth=self.extra_stage_depth,
            reduce_to=self.reduce_to,
            mlp_ratio=self.mlp_ratio,
        )

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            depths=tuple(self.decoder_depths),
            num_heads=self.decoder_heads,
            window_size=self.window_size,
            mlp_ratio=self.mlp_ratio,
        )

    def loss_config(self, frequencies: Tuple[float, float] = (0.5, 0.5)) -> LossConfig:
        return LossConfig(
            frequencies=frequencies,
            boundary_weight=self.w0,
            ssim_window=self.ssim_window,
            side_weights=tuple(self.alphas),
            use_wbce=self.use_wbce,
            use_ssim=self.use_ssim,
            use_siou=self.use_siou,
            weights_from_prediction=self.weights_from_prediction,
        )


def full_config(**overrides) -> TrainConfig:
    """Benchmark-scale profile: 384px inputs, base-width encoder."""
    return dataclasses.replace(TrainConfig(), **overrides).validate()


def desk_config(**overrides) -> TrainConfig:
    """Laptop-scale profile: tiny encoder, 64px synthetic pairs, 500-step budget."""
    cfg = TrainConfig(
        input_size=64,
        embed_dim=32,
        stage_depths=(2, 2, 2, 2),
        stage_heads=(2, 4, 8, 8),
        window_size=4,
        extra_stage_depth=1,
        reduce_to=32,
        decoder_depths=(2, 2, 2, 2),
        ssim_window=11,
        augment=False,
        epochs=250,
        max_steps=500,
        lr=6.5e-3,
        new_layer_lr_multiplier=1.0,
        lr_decay_every=1000,
        out_dir="runs/desk",
    )
    return dataclasses.replace(cfg, **overrides).validate()


PROFILES = {"desk": desk_config, "full": full_config}


def _parse_value(raw: str, ftype) -> object:
    raw = raw.strip()
    origin = get_origin(ftype)
    if origin is tuple or origin is Tuple:
        elem = get_args(ftype)[0]
        return tuple(_parse_value(part, elem) for part in raw.split(",") if part.strip())
    if ftype is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"expected a boolean, got {raw!r}")
    if ftype is int:
        return int(raw)
    if ftype is float:
        return float(raw)
    return raw


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Flat key=value lines; keys are TrainConfig field names, unknown keys reject."""
    hints = typing.get_type_hints(TrainConfig)
    cfg = dataclasses.replace(base) if base is not None else TrainConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in hints:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        setattr(cfg, key, _parse_value(raw, hints[key]))
    return cfg.validate()


def load_config_file(path: str | Path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config_text(Path(path).read_text(), base=base)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"
