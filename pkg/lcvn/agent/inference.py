from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence

import numpy as np
import torch

from lcvn.agent.model import ActorCritic
from lcvn.agent.networks import policy_to_action
from lcvn.agent.trainer import instruction_features
from lcvn.datagen.world import Action
from lcvn.worldmodel.codec import StateCodec, as_observation_tensor
from lcvn.worldmodel.model import WorldModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelCall:
    """One entry of the navigation call log. ``consumes`` is the index of the action fed to the world model."""

    kind: str  # "wm" or "actor"
    step: int
    consumes: Optional[int] = None


@dataclass
class NavigationResult:
    actions: List[Action]
    latents: torch.Tensor  # (T, D): the state the actor saw at each step
    stopped: bool
    calls: List[ModelCall] = field(default_factory=list)

    @property
    def moves(self) -> List[Action]:
        return [a for a in self.actions if not a.is_stop]


@torch.no_grad()
def act(
    agent: ActorCritic,
    latent: torch.Tensor,
    instr: torch.Tensor,
    plan: torch.Tensor,
    deterministic: bool = True,
    generator: Optional[torch.Generator] = None,
) -> Action:
    """Single-row action from (1, D) latent, (1, E) pooled instruction and (1, P) plan."""
    out = agent.actor(latent, instr, plan)
    noise = None
    if not deterministic:
        noise = torch.randn(out.mean.shape, generator=generator, dtype=out.mean.dtype)
    return policy_to_action(out, deterministic=deterministic, noise=noise)


@torch.no_grad()
def navigate(
    start_obs: np.ndarray | torch.Tensor,
    instr_ids: Sequence[int],
    codec: StateCodec,
    wm: WorldModel,
    agent: ActorCritic,
    t_max: int,
    hold_plan: bool = False,
    timeshift: int = 1,
    sampler_steps: int = 8,
    seed: int = 0,
) -> NavigationResult:
    """
    Open-loop planning from one observation. Step 0 acts on the encoded start;
    every later step first imagines the next latent from the previous action,
    then asks the actor. Stops on a stop action or after ``t_max`` steps.
    """
    wm.eval()
    agent.eval()
    generator = torch.Generator().manual_seed(seed)
    obs = as_observation_tensor(start_obs)
    if obs.dim() == 3:
        obs = obs.unsqueeze(0)
    s0 = codec.encode(obs)
    ids = wm.instructions.batch_tokens([list(instr_ids)])
    instr = instruction_features(wm, ids, agent.use_language)

    k = wm.context_size
    history: Deque[torch.Tensor] = deque([s0], maxlen=k)
    moves: Deque[torch.Tensor] = deque([torch.zeros(1, 3, dtype=s0.dtype)], maxlen=k)
    plan = agent.learner_encode(s0, instr).sample(generator=generator) if hold_plan else None

    calls: List[ModelCall] = []
    actions: List[Action] = []
    seen: List[torch.Tensor] = []
    current = s0
    stopped = False
    for t in range(t_max):
        if t > 0:
            prev = torch.as_tensor(actions[t - 1].as_array(), dtype=s0.dtype).unsqueeze(0)
            current = wm.predict_next_latent(
                torch.stack(list(history), dim=1),
                prev,
                ids,
                timeshift=timeshift,
                steps=sampler_steps,
                context_actions=torch.stack(list(moves), dim=1),
                generator=generator,
            )
            calls.append(ModelCall("wm", t, consumes=t - 1))
            history.append(current)
            moves.append(prev)
        z = plan if plan is not None else agent.learner_encode(current, instr).sample(generator=generator)
        action = act(agent, current, instr, z)
        calls.append(ModelCall("actor", t))
        seen.append(current[0])
        actions.append(action)
        if action.is_stop:
            stopped = True
            break

    logger.debug("navigation finished", extra={"steps": len(actions), "stopped": stopped})
    latents = torch.stack(seen) if seen else s0.new_zeros(0, s0.shape[-1])
    return NavigationResult(actions=actions, latents=latents, stopped=stopped, calls=calls)
