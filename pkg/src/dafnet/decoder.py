"""Progressive top-down decoder with mask and edge heads at stages 1-3."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .gca import upsample_to


@dataclass
class DecodedOutputs:
    masks: list[torch.Tensor]  # stage 1, 2, 3
    edges: list[torch.Tensor]

    @property
    def prediction(self) -> torch.Tensor:
        return self.masks[0]


class FeatureFuse(nn.Module):
    """Upsample the deep feature, align channels with a 1x1 conv, add."""

    def __init__(self, deep_channels: int, shallow_channels: int):
        super().__init__()
        self.align = nn.Conv2d(deep_channels, shallow_channels, 1)

    def forward(self, deep: torch.Tensor, shallow: torch.Tensor) -> torch.Tensor:
        expected = tuple((v + 1) // 2 for v in shallow.shape[-2:])
        if tuple(deep.shape[-2:]) != expected:
            raise ValueError(f"deep feature {tuple(deep.shape)} is not half of {tuple(shallow.shape)}")
        return self.align(upsample_to(deep, shallow.shape[-2:])) + shallow


class ConvBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        hidden = max(1, channels // 2)
        self.conv1 = nn.Conv2d(channels, hidden, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden, channels, 3, padding=1)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return F.relu(self.conv2(F.relu(self.conv1(f))))


class PredictionHeads(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.mask = nn.Conv2d(channels, 1, 3, padding=1)
        self.edge = nn.Conv2d(channels, 1, 3, padding=1)

    def forward(self, f: torch.Tensor):
        return torch.sigmoid(self.mask(f)), torch.sigmoid(self.edge(f))


class Decoder(nn.Module):
    """Decodes five enhanced features, deepest first.

    ``fuse[k]`` / ``block[k]`` produce decoded stage ``k + 1`` from decoded
    stage ``k + 2`` and enhanced stage ``k + 1``. Heads exist only for the
    three shallowest stages.
    """

    supervised = 3

    def __init__(self, channels: list[int]):
        super().__init__()
        self.channels = list(channels)
        n = len(channels)
        self.fuse = nn.ModuleList([FeatureFuse(channels[k + 1], channels[k]) for k in range(n - 1)])
        self.block = nn.ModuleList([ConvBlock(channels[k]) for k in range(n - 1)])
        self.heads = nn.ModuleList([PredictionHeads(channels[k]) for k in range(self.supervised)])

    def forward(self, enhanced: list[torch.Tensor]) -> DecodedOutputs:
        x = enhanced[-1]
        masks, edges = [], []
        for k in reversed(range(len(enhanced) - 1)):
            x = self.block[k](self.fuse[k](x, enhanced[k]))
            if k < self.supervised:
                m, e = self.heads[k](x)
                masks.insert(0, m)
                edges.insert(0, e)
        return DecodedOutputs(masks, edges)
