"""Dense attention fluid network for salient object detection."""

from .config import TrainConfig
from .decoder import DecodedOutputs, Decoder
from .encoder import BackboneConfig, EncoderOutput, FluidEncoder
from .model import DAFNet

__all__ = [
    "BackboneConfig",
    "DAFNet",
    "DecodedOutputs",
    "Decoder",
    "EncoderOutput",
    "FluidEncoder",
    "TrainConfig",
]
__version__ = "0.1.0"
