from __future__ import annotations

import torch
from torch import nn

from lcvn.errors import ConfigError, ShapeError

BASE_STEPS = 1000


class NoiseSchedule(nn.Module):
    """
    Linear-beta schedule over L levels. ``alpha_bars[l]`` is the cumulative
    signal fraction at level l; level 0 is clean (alpha_bar = 1). Levels are
    evenly spaced steps of the usual 1000-step schedule, so L <= 1000.
    """

    def __init__(self, levels: int = 64, alpha_bars: torch.Tensor | None = None) -> None:
        super().__init__()
        if alpha_bars is None:
            if not 1 <= levels <= BASE_STEPS:
                raise ConfigError(f"levels must lie in [1, {BASE_STEPS}], got {levels}")
            betas = torch.linspace(1e-4, 0.02, BASE_STEPS, dtype=torch.float64)
            base = torch.cat([torch.ones(1, dtype=torch.float64), torch.cumprod(1.0 - betas, dim=0)])
            idx = torch.linspace(0, BASE_STEPS, levels + 1, dtype=torch.float64).round().long()
            alpha_bars = base[idx]
        alpha_bars = torch.as_tensor(alpha_bars, dtype=torch.float64)
        if alpha_bars[0] != 1.0 or not torch.all(alpha_bars[1:] < alpha_bars[:-1]) or alpha_bars[-1] <= 0:
            raise ConfigError("alpha_bars must start at 1, decrease strictly and stay positive")
        self.register_buffer("alpha_bars", alpha_bars, persistent=False)

    @property
    def levels(self) -> int:
        return int(self.alpha_bars.shape[0] - 1)

    def alpha_bar(self, level: torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
        return self.alpha_bars.to(dtype)[level]


def apply_noise(z: torch.Tensor, level: torch.Tensor, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """sqrt(ab) * z + sqrt(1 - ab) * eps with ab = alpha_bar[level] broadcast over the last dim."""
    if z.shape != eps.shape:
        raise ShapeError(f"noise shape {tuple(eps.shape)} does not match latent shape {tuple(z.shape)}")
    level = torch.as_tensor(level, dtype=torch.long, device=z.device)
    ab = schedule.alpha_bar(level, z.dtype)
    while ab.dim() < z.dim():
        ab = ab.unsqueeze(-1)
    return ab.sqrt() * z + (1.0 - ab).sqrt() * eps
