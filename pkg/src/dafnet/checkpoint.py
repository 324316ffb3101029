"""Checkpoint serialization.

A checkpoint is a safetensors file: a flat map from hierarchical names to
little-endian, shape-tagged arrays plus a string manifest. Model weights
live under ``model.``, Adam moments under ``optim.<slot>.``, RNG states
under ``rng.``. The manifest is stored as a single sorted JSON string
because safetensors does not keep metadata key order. Nothing time- or
host-dependent is written, so saving the same state twice gives identical
bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch
from safetensors.torch import load_file, save_file
from safetensors import safe_open

from .config import TrainConfig

FORMAT = "dafnet-checkpoint-1"


@dataclass
class Checkpoint:
    parameters: dict[str, torch.Tensor]
    config: TrainConfig
    epoch: int = 0
    iteration: int = 0
    optimizer: dict[str, torch.Tensor] = field(default_factory=dict)
    rng: dict[str, torch.Tensor] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.config.seed

    def manifest(self) -> dict[str, str]:
        return {
            "format": FORMAT,
            "config": self.config.to_text(),
            "config_hash": self.config.hash(),
            "epoch": str(self.epoch),
            "iteration": str(self.iteration),
            "seed": str(self.config.seed),
            "history": json.dumps(self.history, sort_keys=True),
        }

    def tensors(self) -> dict[str, torch.Tensor]:
        out = {f"model.{k}": v.detach().to(torch.float32).contiguous() for k, v in self.parameters.items()}
        out.update({f"optim.{k}": v.detach().contiguous() for k, v in self.optimizer.items()})
        out.update({f"rng.{k}": v.detach().contiguous() for k, v in self.rng.items()})
        return out

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        manifest = json.dumps(self.manifest(), sort_keys=True)
        save_file(self.tensors(), str(path), metadata={"manifest": manifest})
        return path


def _strip(prefix: str, tensors: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    n = len(prefix)
    return {k[n:]: v for k, v in tensors.items() if k.startswith(prefix)}


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with safe_open(str(path), framework="pt") as f:
        raw = (f.metadata() or {}).get("manifest")
    meta = json.loads(raw) if raw else {}
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} file")
    config = TrainConfig.from_text(meta["config"])
    if config.hash() != meta["config_hash"]:
        raise ValueError(f"{path}: config hash mismatch")
    tensors = load_file(str(path))
    return Checkpoint(
        parameters=_strip("model.", tensors),
        config=config,
        epoch=int(meta["epoch"]),
        iteration=int(meta["iteration"]),
        optimizer=_strip("optim.", tensors),
        rng=_strip("rng.", tensors),
        history=json.loads(meta["history"]),
    )
