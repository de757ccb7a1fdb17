from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from lcvn.datagen.world import Action

ACTION_SCALE = 0.5
LOGSTD_MIN, LOGSTD_MAX = -5.0, 2.0
STOP_THRESHOLD = 0.5


def _trunk(in_dim: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(
        nn.LayerNorm(in_dim),
        nn.Linear(in_dim, hidden),
        nn.SiLU(),
        nn.Linear(hidden, hidden),
        nn.SiLU(),
    )


@dataclass
class PolicyOutput:
    mean: torch.Tensor  # (B, 3) in [-0.5, 0.5]
    logstd: torch.Tensor  # (B, 3) in [-5, 2]
    stop_logit: torch.Tensor  # (B,)

    @property
    def stop_prob(self) -> torch.Tensor:
        return torch.sigmoid(self.stop_logit)

    def sample(self, noise: Optional[torch.Tensor] = None, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Reparameterised continuous action, clamped to the representable bin range."""
        if noise is None:
            noise = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype).to(self.mean.device)
        return (self.mean + self.logstd.exp() * noise).clamp(-ACTION_SCALE, ACTION_SCALE)

    def log_prob(self, actions: torch.Tensor) -> torch.Tensor:
        """Gaussian log-density of (B, 3) actions, summed over dims."""
        var = (2 * self.logstd).exp()
        return (-0.5 * ((actions - self.mean) ** 2 / var + 2 * self.logstd + math.log(2 * math.pi))).sum(-1)


def policy_to_action(out: PolicyOutput, index: int = 0, deterministic: bool = True, noise: Optional[torch.Tensor] = None) -> Action:
    """Row ``index`` of a policy output as an Action; stop when its probability exceeds 0.5."""
    if float(out.stop_prob[index]) > STOP_THRESHOLD:
        return Action.stop()
    vec = out.mean[index] if deterministic else out.sample(noise)[index]
    dx, dy, dyaw = (float(v) for v in vec.detach().cpu())
    return Action.clamped(dx, dy, dyaw)


class Actor(nn.Module):
    """(state, instruction, plan) -> Gaussian over (dx, dy, dyaw) plus a stop head."""

    def __init__(self, state_dim: int, instr_dim: int, plan_dim: int, hidden: int) -> None:
        super().__init__()
        self.trunk = _trunk(state_dim + instr_dim + plan_dim, hidden)
        self.mean = nn.Linear(hidden, 3)
        self.logstd = nn.Linear(hidden, 3)
        self.stop = nn.Linear(hidden, 1)

    def forward(self, state: torch.Tensor, instr: torch.Tensor, plan: torch.Tensor) -> PolicyOutput:
        h = self.trunk(torch.cat([state, instr, plan], dim=-1))
        return PolicyOutput(
            mean=ACTION_SCALE * torch.tanh(self.mean(h)),
            logstd=self.logstd(h).clamp(LOGSTD_MIN, LOGSTD_MAX),
            stop_logit=self.stop(h).squeeze(-1),
        )


class Critic(nn.Module):
    def __init__(self, state_dim: int, instr_dim: int, plan_dim: int, hidden: int) -> None:
        super().__init__()
        self.trunk = _trunk(state_dim + instr_dim + plan_dim, hidden)
        self.head = nn.Linear(hidden, 1)

    def forward(self, state: torch.Tensor, instr: torch.Tensor, plan: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(torch.cat([state, instr, plan], dim=-1))).squeeze(-1)


def make_target(critic: Critic) -> Critic:
    target = copy.deepcopy(critic)
    for p in target.parameters():
        p.requires_grad_(False)
    return target


@torch.no_grad()
def ema_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source."""
    for t, s in zip(target.parameters(), source.parameters()):
        t.mul_(1.0 - tau).add_(s.detach(), alpha=tau)


class AlignmentHeads(nn.Module):
    """Projections of states and instructions into a shared space for cosine alignment."""

    def __init__(self, state_dim: int, instr_dim: int, align_dim: int) -> None:
        super().__init__()
        self.state = nn.Sequential(nn.Linear(state_dim, align_dim), nn.SiLU(), nn.Linear(align_dim, align_dim))
        self.instr = nn.Linear(instr_dim, align_dim)

    def forward(self, state: torch.Tensor, instr: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return F.normalize(self.state(state), dim=-1), F.normalize(self.instr(instr), dim=-1)
