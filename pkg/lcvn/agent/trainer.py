"""
Phase-2 training: the actor-critic learns inside the frozen world model.

Per trajectory a start index t is drawn; expert and learner plans are encoded
and aligned by KL(expert || learner); the actor then imagines up to H steps
through the world model, collecting intrinsic rewards against the expert
latents. Critic targets are lambda-returns bootstrapped from the EMA target
critic; the actor is trained by backpropagating through the imagined rollout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import torch
import torch.nn.functional as F

from lcvn.agent.model import ActorCritic
from lcvn.agent.networks import ema_update
from lcvn.agent.objectives import (
    actor_loss,
    critic_loss,
    instruction_alignment_loss,
    intrinsic_reward,
    lambda_returns_batched,
    same_instruction_mask,
)
from lcvn.agent.plans import kl_gaussians, standard_normal_like
from lcvn.config import ACConfig, WMConfig
from lcvn.datagen.trajectory import Trajectory
from lcvn.errors import DatasetError
from lcvn.infra.checkpoint import FrozenGuard
from lcvn.infra.optim import check_finite, make_optimizer, set_requires_grad
from lcvn.worldmodel.codec import StateCodec
from lcvn.worldmodel.embedders import InstructionEmbedder
from lcvn.worldmodel.model import WorldModel
from lcvn.worldmodel.trainer import encode_states, pick_instruction

logger = logging.getLogger(__name__)


@torch.no_grad()
def instruction_features(wm: WorldModel, instr_ids: torch.Tensor, use_language: bool = True) -> torch.Tensor:
    """Pooled embedding from the world model's frozen instruction embedder; null token when disabled."""
    if not use_language:
        instr_ids = wm.instructions.null_tokens(instr_ids.shape[0], instr_ids.device)
    return wm.instructions.pooled(instr_ids)


@dataclass
class ACBatch:
    states: torch.Tensor  # (B, N + 1, D) expert latents, right-padded
    actions: torch.Tensor  # (B, N, 3)
    stops: torch.Tensor  # (B, N) bool
    n: torch.Tensor  # (B,) number of actions
    starts: torch.Tensor  # (B,) start index t, 0 <= t < n
    instr_ids: torch.Tensor  # (B, T)


def _gather(states: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    return states[torch.arange(states.shape[0]), idx]


def collate_ac(
    latents: Sequence[torch.Tensor],
    trajs: Sequence[Trajectory],
    picks: Sequence[int],
    starts: Sequence[int],
    instr: Sequence[Sequence[int]],
    embedder: InstructionEmbedder,
) -> ACBatch:
    n_max = max(trajs[i].n for i in picks)
    d = latents[picks[0]].shape[-1]
    states = torch.zeros(len(picks), n_max + 1, d, dtype=latents[picks[0]].dtype)
    actions = torch.zeros(len(picks), n_max, 3, dtype=states.dtype)
    stops = torch.zeros(len(picks), n_max, dtype=torch.bool)
    for row, i in enumerate(picks):
        n = trajs[i].n
        states[row, : n + 1] = latents[i]
        actions[row, :n] = torch.as_tensor(trajs[i].action_array(), dtype=states.dtype)
        stops[row, :n] = torch.as_tensor(trajs[i].stop_flags())
    return ACBatch(
        states=states,
        actions=actions,
        stops=stops,
        n=torch.tensor([trajs[i].n for i in picks], dtype=torch.long),
        starts=torch.tensor(list(starts), dtype=torch.long),
        instr_ids=embedder.batch_tokens(instr),
    )


def ac_train_step(
    agent: ActorCritic,
    wm: WorldModel,
    batch: ACBatch,
    cfg: ACConfig,
    actor_opt: torch.optim.Optimizer,
    critic_opt: torch.optim.Optimizer,
    generator: torch.Generator,
    sampler_steps: int = 8,
    timeshift: int = 1,
) -> Dict[str, float]:
    agent.train()
    wm.eval()
    b = batch.states.shape[0]
    k_ctx = wm.context_size
    t = batch.starts
    n = batch.n
    lengths = torch.clamp(n - t, max=cfg.horizon)
    horizon = int(lengths.max())
    instr = instruction_features(wm, batch.instr_ids, cfg.use_language)
    ids = batch.instr_ids if cfg.use_language else wm.instructions.null_tokens(b)

    # plans: expert over s_{t:n}, learner from s_t
    seg_len = n - t + 1
    seg_idx = t[:, None] + torch.arange(int(seg_len.max()))[None, :]
    seg_idx = torch.minimum(seg_idx, n[:, None])
    segments = batch.states[torch.arange(b)[:, None], seg_idx]
    q_expert = agent.expert_encode(segments, seg_len, instr)
    s_t = _gather(batch.states, t)
    q_learner = agent.learner_encode(s_t, instr)
    kl = kl_gaussians(q_expert, q_learner)
    z_plan = q_learner.sample(generator=generator)
    z_expert = q_expert.sample(generator=generator)

    # context s^E_{t-k+1..t}, repeating s_0 before the start of the trajectory
    ctx_idx = (t[:, None] + torch.arange(-k_ctx + 1, 1)[None, :]).clamp_min(0)
    ctx = batch.states[torch.arange(b)[:, None], ctx_idx]
    act_idx = ctx_idx - 1
    ctx_actions = batch.actions[torch.arange(b)[:, None], act_idx.clamp_min(0)] * (act_idx >= 0).unsqueeze(-1)

    imagined: List[torch.Tensor] = [s_t]
    rewards: List[torch.Tensor] = []
    for step in range(horizon):
        if cfg.actor_input == "expert":
            actor_state = _gather(batch.states, torch.minimum(t + step, n))
        else:
            actor_state = imagined[-1]
        action = agent.actor(actor_state, instr, z_plan).sample(generator=generator)
        nxt = wm.predict_next_latent(
            ctx, action, ids, timeshift=timeshift, steps=sampler_steps, context_actions=ctx_actions, generator=generator
        )
        imagined.append(nxt)
        ctx = torch.cat([ctx[:, 1:], nxt.unsqueeze(1)], dim=1)
        ctx_actions = torch.cat([ctx_actions[:, 1:], action.unsqueeze(1)], dim=1)
        rewards.append(intrinsic_reward(_gather(batch.states, torch.minimum(t + step + 1, n)), nxt))

    reward = torch.stack(rewards, dim=1)  # (B, H)
    states_hat = torch.stack(imagined, dim=1)  # (B, H + 1, D)
    mask = torch.arange(horizon)[None, :] < lengths[:, None]

    plan_rep = z_plan.unsqueeze(1).expand(-1, horizon + 1, -1)
    instr_rep = instr.unsqueeze(1).expand(-1, horizon + 1, -1)
    target_values = agent.target_critic(states_hat, instr_rep, plan_rep)
    returns = lambda_returns_batched(reward, target_values, cfg.gamma, cfg.lambda_, lengths)

    same = same_instruction_mask(ids)
    alignment = torch.stack(
        [
            instruction_alignment_loss(*agent.heads(states_hat[:, j + 1], instr), margin=cfg.margin, same_instruction=same)
            for j in range(horizon)
        ]
    )
    loss_actor = actor_loss(
        returns, kl[:, None].expand(-1, horizon), alignment[None, :].expand(b, -1), cfg.alpha1, cfg.alpha2, mask
    )

    values = agent.critic(states_hat[:, :-1].detach(), instr_rep[:, :-1], plan_rep[:, :-1].detach())
    loss_critic = critic_loss(values, returns, mask)

    # sequence CVAE: the actor decodes expert actions from z_expert
    span = int(seg_len.max()) - 1
    dec_idx = torch.minimum(t[:, None] + torch.arange(span)[None, :], (n - 1)[:, None])
    dec_mask = torch.arange(span)[None, :] < (n - t)[:, None]
    dec_states = batch.states[torch.arange(b)[:, None], dec_idx]
    dec_out = agent.actor(
        dec_states, instr.unsqueeze(1).expand(-1, span, -1), z_expert.unsqueeze(1).expand(-1, span, -1)
    )
    expert_actions = batch.actions[torch.arange(b)[:, None], dec_idx]
    expert_stops = batch.stops[torch.arange(b)[:, None], dec_idx]
    move_mask = dec_mask & ~expert_stops
    nll = -dec_out.log_prob(expert_actions)
    recon = (nll * move_mask).sum() / move_mask.sum().clamp_min(1) + (
        F.binary_cross_entropy_with_logits(dec_out.stop_logit, expert_stops.to(nll.dtype), reduction="none") * dec_mask
    ).sum() / dec_mask.sum().clamp_min(1)
    prior = kl_gaussians(q_expert, standard_normal_like(q_expert)).mean()
    plan_term = cfg.plan_recon_weight * (recon + cfg.plan_prior_weight * prior)

    losses = {
        "actor": loss_actor,
        "critic": loss_critic,
        "kl": kl.mean(),
        "ins": alignment.mean(),
        "recon": recon,
        "reward": (reward * mask).sum() / mask.sum(),
        "value": (values * mask).sum() / mask.sum(),
    }
    check_finite(losses, phase="actor-critic", horizon=horizon)
    actor_opt.zero_grad(set_to_none=True)
    critic_opt.zero_grad(set_to_none=True)
    (loss_actor + plan_term + loss_critic).backward()
    actor_opt.step()
    critic_opt.step()
    ema_update(agent.target_critic, agent.critic, cfg.tau)
    return {k: float(v.detach()) for k, v in losses.items()}


class ActorCriticTrainer:
    def __init__(
        self,
        agent: ActorCritic,
        wm: WorldModel,
        codec: StateCodec,
        cfg: ACConfig,
        wm_cfg: WMConfig,
        trajs: Sequence[Trajectory],
        seed: int,
    ) -> None:
        self.agent = agent
        self.wm = wm
        self.cfg = cfg
        self.wm_cfg = wm_cfg
        self.trajs = [t for t in trajs if t.n >= 1]
        if len(self.trajs) < 2:
            raise DatasetError("actor-critic training needs at least 2 trajectories")
        if cfg.batch_size < 2:
            raise DatasetError("actor-critic batch_size must be >= 2 for instruction alignment negatives")
        self.latents = encode_states(codec, self.trajs)
        set_requires_grad(wm, False)
        self.guard = FrozenGuard(wm, "world model")
        self.actor_opt, self.actor_sched = make_optimizer(agent.actor_parameters(), cfg.actor_lr, cfg.warmup_steps)
        self.critic_opt, self.critic_sched = make_optimizer(agent.critic.parameters(), cfg.critic_lr, cfg.warmup_steps)
        self.generator = torch.Generator().manual_seed(seed)
        self.step_count = 0
        logger.info(
            "actor-critic trainer ready",
            extra={"trajectories": len(self.trajs), "wm_checksum": self.guard.checksum[:12], "horizon": cfg.horizon},
        )

    def sample_batch(self) -> ACBatch:
        g = self.generator
        if self.cfg.batch_size <= len(self.trajs):
            picks = torch.randperm(len(self.trajs), generator=g)[: self.cfg.batch_size].tolist()
        else:
            picks = torch.randint(len(self.trajs), (self.cfg.batch_size,), generator=g).tolist()
        starts = [int(torch.randint(self.trajs[i].n, (1,), generator=g)) for i in picks]
        instr = [pick_instruction(self.trajs[i], self.cfg.style, g) for i in picks]
        return collate_ac(self.latents, self.trajs, picks, starts, instr, self.wm.instructions)

    def step(self) -> Dict[str, float]:
        losses = ac_train_step(
            self.agent,
            self.wm,
            self.sample_batch(),
            self.cfg,
            self.actor_opt,
            self.critic_opt,
            self.generator,
            sampler_steps=self.wm_cfg.sampler_steps,
            timeshift=self.wm_cfg.timeshift,
        )
        self.actor_sched.step()
        self.critic_sched.step()
        self.step_count += 1
        if self.cfg.checksum_every and self.step_count % self.cfg.checksum_every == 0:
            self.guard.verify()
        return losses

    def state_dict(self) -> Dict[str, Any]:
        return {
            "actor_opt": self.actor_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "actor_sched": self.actor_sched.state_dict(),
            "critic_sched": self.critic_sched.state_dict(),
            "generator": self.generator.get_state(),
            "step": self.step_count,
            "wm_checksum": self.guard.checksum,
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.actor_opt.load_state_dict(state["actor_opt"])
        self.critic_opt.load_state_dict(state["critic_opt"])
        self.actor_sched.load_state_dict(state["actor_sched"])
        self.critic_sched.load_state_dict(state["critic_sched"])
        self.generator.set_state(state["generator"])
        self.step_count = int(state["step"])
