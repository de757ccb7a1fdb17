from lcvn.worldmodel.codec import LatentCodec, PixelCodec, StateCodec
from lcvn.worldmodel.embedders import ConditionEmbedder, InstructionEmbedder
from lcvn.worldmodel.ldit import LDiT
from lcvn.worldmodel.model import WorldModel, pad_context
from lcvn.worldmodel.schedule import NoiseSchedule, apply_noise
from lcvn.worldmodel.vae import VAE

__all__ = [
    "ConditionEmbedder",
    "InstructionEmbedder",
    "LDiT",
    "LatentCodec",
    "NoiseSchedule",
    "PixelCodec",
    "StateCodec",
    "VAE",
    "WorldModel",
    "apply_noise",
    "pad_context",
]
