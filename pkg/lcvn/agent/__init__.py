from lcvn.agent.inference import ModelCall, NavigationResult, act, navigate
from lcvn.agent.model import ActorCritic
from lcvn.agent.networks import Actor, Critic, PolicyOutput, ema_update, policy_to_action
from lcvn.agent.objectives import (
    actor_loss,
    critic_loss,
    instruction_alignment_loss,
    intrinsic_reward,
    lambda_returns,
    lambda_returns_batched,
    same_instruction_mask,
)
from lcvn.agent.plans import ExpertEncoder, LearnerEncoder, PlanDistribution, kl_gaussians
from lcvn.agent.trainer import ACBatch, ActorCriticTrainer, ac_train_step, collate_ac, instruction_features

__all__ = [
    "ACBatch",
    "ActorCritic",
    "ActorCriticTrainer",
    "Actor",
    "Critic",
    "ExpertEncoder",
    "LearnerEncoder",
    "ModelCall",
    "NavigationResult",
    "PlanDistribution",
    "PolicyOutput",
    "ac_train_step",
    "act",
    "actor_loss",
    "collate_ac",
    "critic_loss",
    "ema_update",
    "instruction_alignment_loss",
    "instruction_features",
    "intrinsic_reward",
    "kl_gaussians",
    "lambda_returns",
    "lambda_returns_batched",
    "navigate",
    "policy_to_action",
    "same_instruction_mask",
]
