"""Training configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 8
    lr_initial: float = 1e-4
    lr_final: float = 1e-6
    lr_constant_epochs: int = 20
    ohem_start_epoch: int = 51
    delta_init: float = 0.1
    w_m: float = 0.7
    w_e: float = 0.3
    seed: int = 0
    use_gfa: bool = True
    use_cpa: bool = True
    use_daf: bool = True
    input_size: int = 128
    stage_channels: list[int] = field(default_factory=lambda: [64, 128, 256, 512, 512])
    stage_convs: list[int] = field(default_factory=lambda: [2, 2, 3, 3, 3])
    augment: bool = True
    max_iters: int = 0  # 0 runs every epoch to completion

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 <= self.lr_constant_epochs < self.epochs:
            raise ValueError("lr_constant_epochs must be smaller than epochs")
        if self.ohem_start_epoch > self.epochs + 1:
            raise ValueError("ohem_start_epoch must not exceed epochs + 1")
        if self.input_size % 16:
            raise ValueError(f"input_size must be a multiple of 16, got {self.input_size}")
        if len(self.stage_channels) != 5 or len(self.stage_convs) != 5:
            raise ValueError("stage_channels and stage_convs need 5 entries")

    @property
    def toggles(self) -> dict[str, bool]:
        return {"use_gfa": self.use_gfa, "use_cpa": self.use_cpa, "use_daf": self.use_daf}

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            values[key] = parse_value(types[key], value)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_value(kind: str, value: str):
    if kind == "bool":
        return parse_bool(value)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "list[int]":
        return [int(v) for v in value.split(",") if v.strip()]
    raise TypeError(f"unsupported config field type {kind}")
