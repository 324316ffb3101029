from __future__ import annotations

import torch
import torch.nn as nn

from .decoder import DecodedOutputs, Decoder
from .encoder import BackboneConfig, FluidEncoder


class DAFNet(nn.Module):
    def __init__(self, config: BackboneConfig | None = None, use_gfa: bool = True,
                 use_cpa: bool = True, use_daf: bool = True, delta_init: float = 0.1,
                 chunk: int | None = 4096):
        super().__init__()
        self.encoder = FluidEncoder(config, use_gfa=use_gfa, use_cpa=use_cpa, use_daf=use_daf,
                                    delta_init=delta_init, chunk=chunk)
        self.decoder = Decoder(self.encoder.out_channels)

    @property
    def config(self) -> BackboneConfig:
        return self.encoder.config

    def forward(self, image: torch.Tensor) -> DecodedOutputs:
        return self.decoder(self.encoder(image).enhanced)

