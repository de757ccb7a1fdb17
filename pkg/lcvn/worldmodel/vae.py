from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn

from lcvn.errors import ShapeError
from lcvn.infra.optim import check_finite


def kl_standard_normal(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mean, exp(logvar)) || N(0, I)) summed over the last dim, averaged over the batch."""
    return 0.5 * (logvar.exp() + mean.pow(2) - 1.0 - logvar).sum(dim=-1).mean()


class VAE(nn.Module):
    """Convolutional VAE over (B, H, W, 3) observations in [0, 1]."""

    def __init__(self, latent_dim: int = 16, image_size: int = 32, channels: Sequence[int] = (16, 32)) -> None:
        super().__init__()
        self.latent_dim = latent_dim
        self.image_size = image_size
        downsample = 2 ** len(channels)
        if image_size % downsample:
            raise ShapeError(f"image_size {image_size} not divisible by {downsample}")
        self.grid = image_size // downsample
        chans: List[int] = [3, *channels]

        enc: List[nn.Module] = []
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            enc += [nn.Conv2d(c_in, c_out, kernel_size=4, stride=2, padding=1), nn.ReLU()]
        self.encoder = nn.Sequential(*enc, nn.Flatten())
        flat = chans[-1] * self.grid * self.grid
        self.to_stats = nn.Linear(flat, 2 * latent_dim)

        self.from_latent = nn.Linear(latent_dim, flat)
        dec: List[nn.Module] = []
        rev = chans[::-1]
        for i, (c_in, c_out) in enumerate(zip(rev[:-1], rev[1:])):
            dec.append(nn.ConvTranspose2d(c_in, c_out, kernel_size=4, stride=2, padding=1))
            dec.append(nn.ReLU() if i < len(rev) - 2 else nn.Sigmoid())
        self.decoder = nn.Sequential(*dec)
        self._top_channels = chans[-1]

    def encode(self, obs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(B, H, W, 3) -> (mean, logvar), each (B, latent_dim)."""
        if obs.dim() != 4 or obs.shape[1:] != (self.image_size, self.image_size, 3):
            raise ShapeError(f"expected (B, {self.image_size}, {self.image_size}, 3), got {tuple(obs.shape)}")
        h = self.encoder(rearrange(obs, "b h w c -> b c h w"))
        mean, logvar = self.to_stats(h).chunk(2, dim=-1)
        return mean, logvar

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        h = rearrange(self.from_latent(z), "b (c h w) -> b c h w", c=self._top_channels, h=self.grid, w=self.grid)
        return rearrange(self.decoder(h), "b c h w -> b h w c")

    def loss(self, obs: torch.Tensor, noise: torch.Tensor, beta: float) -> Dict[str, torch.Tensor]:
        """Pixel MSE + beta * KL, with the reparameterisation noise given explicitly."""
        mean, logvar = self.encode(obs)
        z = mean + (0.5 * logvar).exp() * noise
        recon = F.mse_loss(self.decode(z), obs)
        kl = kl_standard_normal(mean, logvar)
        return {"loss": recon + beta * kl, "recon": recon, "kl": kl}


def vae_train_step(
    vae: VAE,
    optimizer: torch.optim.Optimizer,
    batch: torch.Tensor,
    beta: float,
    generator: torch.Generator,
    scheduler: torch.optim.lr_scheduler.LRScheduler | None = None,
) -> Dict[str, float]:
    vae.train()
    noise = torch.randn(batch.shape[0], vae.latent_dim, generator=generator, dtype=batch.dtype).to(batch.device)
    losses = vae.loss(batch, noise, beta)
    check_finite(losses, phase="vae")
    optimizer.zero_grad(set_to_none=True)
    losses["loss"].backward()
    optimizer.step()
    if scheduler is not None:
        scheduler.step()
    return {k: float(v.detach()) for k, v in losses.items()}

