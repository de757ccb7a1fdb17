"""Latent plans: a full-trajectory expert encoder and a single-state learner encoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from lcvn.errors import ShapeError


@dataclass
class PlanDistribution:
    mean: torch.Tensor
    logvar: torch.Tensor

    @property
    def dim(self) -> int:
        return int(self.mean.shape[-1])

    def sample(self, noise: Optional[torch.Tensor] = None, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Reparameterised draw mean + std * noise."""
        if noise is None:
            noise = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype).to(self.mean.device)
        return self.mean + (0.5 * self.logvar).exp() * noise


def kl_gaussians(p: PlanDistribution, q: PlanDistribution) -> torch.Tensor:
    """Closed-form KL(p || q) for diagonal Gaussians, summed over the last dim."""
    if p.mean.shape != q.mean.shape:
        raise ShapeError(f"plan shapes differ: {tuple(p.mean.shape)} vs {tuple(q.mean.shape)}")
    var_ratio = (p.logvar - q.logvar).exp()
    mahalanobis = (p.mean - q.mean).pow(2) / q.logvar.exp()
    return 0.5 * (var_ratio + mahalanobis - 1.0 - (p.logvar - q.logvar)).sum(dim=-1)


def standard_normal_like(p: PlanDistribution) -> PlanDistribution:
    return PlanDistribution(torch.zeros_like(p.mean), torch.zeros_like(p.logvar))


class ExpertEncoder(nn.Module):
    """GRU over s_{t:n}, each step concatenated with the pooled instruction."""

    def __init__(self, state_dim: int, instr_dim: int, plan_dim: int, hidden: int) -> None:
        super().__init__()
        self.rnn = nn.GRU(state_dim + instr_dim, hidden, batch_first=True)
        self.head = nn.Linear(hidden, 2 * plan_dim)

    def forward(self, states: torch.Tensor, lengths: torch.Tensor, instr: torch.Tensor) -> PlanDistribution:
        """states: (B, T, D) right-padded; lengths: (B,) >= 1; instr: (B, E)."""
        if torch.any(lengths < 1):
            raise ShapeError("expert encoder needs sequences of length >= 1")
        x = torch.cat([states, instr.unsqueeze(1).expand(-1, states.shape[1], -1)], dim=-1)
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.rnn(packed)
        mean, logvar = self.head(h[-1]).chunk(2, dim=-1)
        return PlanDistribution(mean, logvar)


class LearnerEncoder(nn.Module):
    def __init__(self, state_dim: int, instr_dim: int, plan_dim: int, hidden: int) -> None:
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(state_dim + instr_dim, hidden),
            nn.SiLU(),
            nn.Linear(hidden, hidden),
            nn.SiLU(),
            nn.Linear(hidden, 2 * plan_dim),
        )

    def forward(self, state: torch.Tensor, instr: torch.Tensor) -> PlanDistribution:
        mean, logvar = self.net(torch.cat([state, instr], dim=-1)).chunk(2, dim=-1)
        return PlanDistribution(mean, logvar)
