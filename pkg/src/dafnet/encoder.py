"""Backbone feature extractor and the dense attention fluid."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .gca import GCAUnit, upsample_to

IMAGE_MEAN = (0.485, 0.456, 0.406)
IMAGE_STD = (0.229, 0.224, 0.225)


@dataclass
class BackboneConfig:
    stage_channels: list[int] = field(default_factory=lambda: [64, 128, 256, 512, 512])
    stage_convs: list[int] = field(default_factory=lambda: [2, 2, 3, 3, 3])
    input_size: tuple[int, int] = (128, 128)
    in_channels: int = 3

    def __post_init__(self):
        self.stage_channels = [int(c) for c in self.stage_channels]
        self.stage_convs = [int(c) for c in self.stage_convs]
        self.input_size = tuple(int(v) for v in self.input_size)
        if len(self.stage_channels) != 5 or len(self.stage_convs) != 5:
            raise ValueError("backbone needs exactly 5 stages")
        if min(self.stage_channels) < 3:
            raise ValueError("every stage needs at least 3 channels for the attention pyramid")
        check_input_size(self.input_size)


def check_input_size(size) -> None:
    h, w = size
    if h % 16 or w % 16 or h <= 0 or w <= 0:
        raise ValueError(f"input size must be a positive multiple of 16, got {h}x{w}")


@dataclass
class EncoderOutput:
    enhanced: list[torch.Tensor]
    attentions: list[torch.Tensor]
    raw_attentions: list[torch.Tensor]


class Backbone(nn.Module):
    """VGG16-style extractor with the first max-pool removed.

    Stage 1 keeps full resolution; every later stage starts with a 2x2 pool.
    """

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        stages = []
        cin = config.in_channels
        for cout, nconv in zip(config.stage_channels, config.stage_convs):
            layers = []
            for _ in range(nconv):
                layers += [nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True)]
                cin = cout
            stages.append(nn.Sequential(*layers))
        self.stages = nn.ModuleList(stages)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        check_input_size(image.shape[-2:])
        feats = []
        x = image
        for s, stage in enumerate(self.stages):
            if s:
                x = F.max_pool2d(x, 2, 2)
            x = stage(x)
            feats.append(x)
        return feats


def downsample_attention(a: torch.Tensor, size) -> torch.Tensor:
    h, w = a.shape[-2:]
    if h < size[0] or w < size[1]:
        raise ValueError(f"attention fluid flows shallow to deep only: {h}x{w} -> {tuple(size)}")
    return F.adaptive_avg_pool2d(a, tuple(size))


class AttentionFluid(nn.Module):
    """Refines stage ``s`` attention from all shallower refined maps."""

    def __init__(self, stages: int = 5):
        super().__init__()
        self.convs = nn.ModuleList([nn.Conv2d(s, 1, 3, padding=1) for s in range(1, stages + 1)])

    def update(self, prior: list[torch.Tensor], current: torch.Tensor) -> torch.Tensor:
        size = current.shape[-2:]
        x = torch.cat([downsample_attention(a, size) for a in prior] + [current], dim=1)
        return torch.sigmoid(self.convs[len(prior)](x))

    def forward(self, raw: list[torch.Tensor]) -> list[torch.Tensor]:
        refined: list[torch.Tensor] = []
        for a in raw:
            refined.append(self.update(refined, a))
        return refined


def enhanced_feature(d0: torch.Tensor, out1: torch.Tensor, attention: torch.Tensor) -> torch.Tensor:
    """``concat(d0, up(out1)) * (attention + 1)`` with channel broadcasting."""
    if attention.shape[-2:] != d0.shape[-2:] or attention.shape[1] != 1:
        raise ValueError(f"attention {tuple(attention.shape)} does not match feature {tuple(d0.shape)}")
    if tuple(out1.shape[-2:]) != tuple((v + 1) // 2 for v in d0.shape[-2:]):
        raise ValueError(f"level-1 feature {tuple(out1.shape)} is not half of {tuple(d0.shape)}")
    fused = torch.cat([d0, upsample_to(out1, d0.shape[-2:])], dim=1)
    return fused * (attention + 1.0)


class FluidEncoder(nn.Module):
    def __init__(self, config: BackboneConfig | None = None, use_gfa: bool = True,
                 use_cpa: bool = True, use_daf: bool = True, delta_init: float = 0.1,
                 chunk: int | None = 4096):
        super().__init__()
        self.config = config or BackboneConfig()
        self.use_gfa, self.use_cpa, self.use_daf = use_gfa, use_cpa, use_daf
        attend = use_gfa or use_cpa or use_daf
        self.backbone = Backbone(self.config)
        self.gca = nn.ModuleList([
            GCAUnit(c, use_gfa=use_gfa, use_cpa=use_cpa, attend=attend,
                    delta_init=delta_init, chunk=chunk)
            for c in self.config.stage_channels
        ])
        if use_daf:
            self.daf = AttentionFluid(len(self.config.stage_channels))

    @property
    def out_channels(self) -> list[int]:
        return [g.out_channels for g in self.gca]

    def forward(self, image: torch.Tensor) -> EncoderOutput:
        side = self.backbone(image)
        units = [gca(f) for gca, f in zip(self.gca, side)]
        raw = [u[0] for u in units]
        attentions = self.daf(raw) if self.use_daf else raw
        enhanced = [enhanced_feature(d0, out1, a) for (_, out1, d0), a in zip(units, attentions)]
        return EncoderOutput(enhanced, attentions, raw)
