"""Single-file checkpoint container and pretrained-backbone import."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import torch

from .config import TrainConfig, parse_config_text, format_config
from .model import ChangeDetectionNet

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed containers or tensor shape conflicts."""


def save_checkpoint(path: str | Path, model: ChangeDetectionNet, cfg: TrainConfig,
                    epoch: int, optimizer: torch.optim.Optimizer | None = None,
                    extra: dict | None = None) -> Path:
    record = {
        "format_version": FORMAT_VERSION,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "config": format_config(cfg),
        "rng_state": torch.get_rng_state(),
    }
    if extra:
        record.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(record, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    record = torch.load(Path(path), map_location="cpu", weights_only=False)
    if not isinstance(record, dict) or "format_version" not in record:
        raise CheckpointError(f"{path}: not a checkpoint container (missing format_version)")
    if record["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {record['format_version']}"
        )
    return record


def build_model(cfg: TrainConfig) -> ChangeDetectionNet:
    """Seeded model construction so identical configs yield identical weights."""
    torch.manual_seed(cfg.seed)
    return ChangeDetectionNet(
        cfg.encoder_config(),
        cfg.decoder_config(),
        use_dfe=cfg.use_dfe,
        use_pam=cfg.use_pam,
        decoder=cfg.decoder,
    )


def restore_model(record: dict) -> Tuple[ChangeDetectionNet, TrainConfig]:
    cfg = parse_config_text(record["config"])
    model = build_model(cfg)
    model.load_state_dict(record["model_state"])
    model.eval()
    return model, cfg


@dataclass
class ImportReport:
    """Which backbone tensors came from the container vs fresh initialisation."""

    loaded: List[str] = field(default_factory=list)
    initialized: List[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"loaded={len(self.loaded)}", f"initialized={len(self.initialized)}"]
        lines += [f"loaded_tensor={name}" for name in self.loaded]
        lines += [f"initialized_tensor={name}" for name in self.initialized]
        return "\n".join(lines)


def save_weight_container(path: str | Path, tensors: Dict[str, torch.Tensor]) -> Path:
    """Write the documented import container: named backbone tensors + version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"format_version": FORMAT_VERSION, "tensors": dict(tensors)}, path)
    return path


def load_weight_container(path: str | Path) -> Dict[str, torch.Tensor]:
    record = torch.load(Path(path), map_location="cpu", weights_only=False)
    if not isinstance(record, dict) or "format_version" not in record or "tensors" not in record:
        raise CheckpointError(f"{path}: not a weight container")
    return record["tensors"]


def apply_pretrained(model: ChangeDetectionNet, tensors: Dict[str, torch.Tensor]) -> ImportReport:
    """Copy name/shape-matched encoder tensors; everything else keeps its init.

    Tensor names are relative to the encoder submodule. A matched name with a
    conflicting shape is an error naming the tensor.
    """
    report = ImportReport()
    state = model.encoder.state_dict()
    for name, current in state.items():
        if name in tensors:
            incoming = tensors[name]
            if tuple(incoming.shape) != tuple(current.shape):
                raise CheckpointError(
                    f"shape conflict for tensor '{name}': "
                    f"container {tuple(incoming.shape)} vs model {tuple(current.shape)}"
                )
            state[name] = incoming.to(current.dtype)
            report.loaded.append(name)
        else:
            report.initialized.append(name)
    model.encoder.load_state_dict(state)
    return report


def import_pretrained(path: str | Path, cfg: TrainConfig) -> Tuple[ChangeDetectionNet, ImportReport]:
    model = build_model(cfg)
    report = apply_pretrained(model, load_weight_container(path))
    return model, report


def pretrained_parameter_names(model: ChangeDetectionNet, report: ImportReport) -> frozenset:
    """Fully-qualified names of imported parameters, for the base-lr group."""
    prefixed = {f"encoder.{name}" for name in report.loaded}
    return frozenset(name for name, _ in model.named_parameters() if name in prefixed)
