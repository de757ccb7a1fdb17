from __future__ import annotations

import torch
from torch import nn

from lcvn.agent.networks import Actor, AlignmentHeads, Critic, make_target
from lcvn.agent.plans import ExpertEncoder, LearnerEncoder, PlanDistribution
from lcvn.config import ACConfig


class ActorCritic(nn.Module):
    """Every trainable piece of the latent agent, plus the EMA target critic."""

    def __init__(
        self,
        state_dim: int,
        instr_dim: int,
        plan_dim: int = 8,
        hidden: int = 128,
        align_dim: int = 16,
        use_language: bool = True,
    ) -> None:
        super().__init__()
        self.state_dim = state_dim
        self.instr_dim = instr_dim
        self.plan_dim = plan_dim
        self.use_language = use_language
        self.expert = ExpertEncoder(state_dim, instr_dim, plan_dim, hidden)
        self.learner = LearnerEncoder(state_dim, instr_dim, plan_dim, hidden)
        self.actor = Actor(state_dim, instr_dim, plan_dim, hidden)
        self.critic = Critic(state_dim, instr_dim, plan_dim, hidden)
        self.target_critic = make_target(self.critic)
        self.heads = AlignmentHeads(state_dim, instr_dim, align_dim)

    @classmethod
    def from_config(cls, cfg: ACConfig, state_dim: int, instr_dim: int) -> "ActorCritic":
        return cls(state_dim, instr_dim, cfg.plan_dim, cfg.hidden, cfg.align_dim, cfg.use_language)

    def actor_parameters(self):
        for module in (self.expert, self.learner, self.actor, self.heads):
            yield from module.parameters()

    def expert_encode(self, states: torch.Tensor, lengths: torch.Tensor, instr: torch.Tensor) -> PlanDistribution:
        return self.expert(states, lengths, instr)

    def learner_encode(self, state: torch.Tensor, instr: torch.Tensor) -> PlanDistribution:
        return self.learner(state, instr)
