"""
State codecs: how observations become the state vectors the world model,
the agent and the metrics operate on.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from einops import rearrange, repeat

from lcvn.errors import ShapeError
from lcvn.worldmodel.vae import VAE


@runtime_checkable
class StateCodec(Protocol):
    space: str

    @property
    def dim(self) -> int: ...

    def encode(self, obs: torch.Tensor) -> torch.Tensor: ...

    def decode(self, states: torch.Tensor) -> torch.Tensor: ...


def as_observation_tensor(obs: np.ndarray | torch.Tensor, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(obs) if not isinstance(obs, torch.Tensor) else obs, dtype=dtype)
    return t[None] if t.dim() == 3 else t


class LatentCodec:
    """VAE mean as the state; decoding runs the VAE decoder."""

    space = "latent"

    def __init__(self, vae: VAE) -> None:
        self.vae = vae

    @property
    def dim(self) -> int:
        return self.vae.latent_dim

    def encode(self, obs: torch.Tensor) -> torch.Tensor:
        mean, _ = self.vae.encode(obs)
        return mean

    def decode(self, states: torch.Tensor) -> torch.Tensor:
        return self.vae.decode(states)


class PixelCodec:
    """Average-pooled pixels rescaled to [-1, 1] and flattened (no learned parameters)."""

    space = "pixel"

    def __init__(self, image_size: int = 32, pool: int = 4) -> None:
        if image_size % pool:
            raise ShapeError(f"image_size {image_size} not divisible by pixel pool {pool}")
        self.image_size = image_size
        self.pool = pool
        self.side = image_size // pool

    @property
    def dim(self) -> int:
        return self.side * self.side * 3

    def encode(self, obs: torch.Tensor) -> torch.Tensor:
        x = F.avg_pool2d(rearrange(obs, "b h w c -> b c h w"), self.pool)
        return rearrange(x, "b c h w -> b (h w c)") * 2.0 - 1.0

    def decode(self, states: torch.Tensor) -> torch.Tensor:
        x = rearrange((states + 1.0) / 2.0, "b (h w c) -> b h w c", h=self.side, w=self.side, c=3)
        return repeat(x, "b h w c -> b (h p1) (w p2) c", p1=self.pool, p2=self.pool).clamp(0.0, 1.0)
