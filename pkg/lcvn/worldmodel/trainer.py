from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from lcvn.config import STYLES, VAEConfig, WMConfig
from lcvn.datagen.trajectory import Trajectory
from lcvn.datagen.world import compose_actions
from lcvn.errors import DatasetError
from lcvn.infra.optim import check_finite, make_optimizer
from lcvn.worldmodel.codec import StateCodec, as_observation_tensor
from lcvn.worldmodel.model import WorldModel
from lcvn.worldmodel.vae import VAE, vae_train_step

logger = logging.getLogger(__name__)


def pick_instruction(traj: Trajectory, style: str, generator: torch.Generator) -> List[int]:
    """Vocabulary ids of the trajectory's instruction; ``style="all"`` picks one style at random."""
    if style == "all":
        style = STYLES[int(torch.randint(len(STYLES), (1,), generator=generator))]
    if style not in traj.instructions:
        raise DatasetError(f"trajectory {traj.trajectory_id} has no {style!r} instruction")
    return list(traj.instructions[style].tokens)


@torch.no_grad()
def encode_states(
    codec: StateCodec, trajs: Sequence[Trajectory], dtype: torch.dtype = torch.float32, chunk: int = 256
) -> List[torch.Tensor]:
    """(n + 1, D) state sequence per trajectory."""
    out = []
    for traj in trajs:
        obs = as_observation_tensor(traj.observations, dtype)
        out.append(torch.cat([codec.encode(obs[i : i + chunk]) for i in range(0, len(obs), chunk)]))
    return out


@dataclass
class WMBatch:
    states: torch.Tensor  # (B, k + 1, D)
    actions: torch.Tensor  # (B, k + 1, 3), raw metres/radians
    timeshifts: torch.Tensor  # (B, k + 1)
    instr_ids: torch.Tensor  # (B, T)


def build_windows(trajs: Sequence[Trajectory], k: int, timeshift: int) -> List[Tuple[int, int]]:
    """
    (trajectory index, last context index t) for every target t + timeshift <= n.
    In left-padded coordinates these are the positions k - 1 ... n - 1.
    """
    windows = []
    for i, traj in enumerate(trajs):
        if traj.n < k:
            logger.warning(
                "trajectory too short for the context window",
                extra={"trajectory_id": traj.trajectory_id, "n": traj.n, "k": k},
            )
            continue
        windows.extend((i, t) for t in range(0, traj.n - timeshift + 1))
    return windows


def window_arrays(
    states: torch.Tensor, traj: Trajectory, t: int, k: int, timeshift: int
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """States, incoming actions and timeshifts of the window ending at ``t`` (+ target)."""
    idx = [max(j, 0) for j in range(t - k + 1, t + 1)]
    frames = states[idx + [t + timeshift]]
    acts = []
    for j in range(t - k + 1, t + 1):
        acts.append(traj.actions[j - 1].as_array() if j >= 1 else np.zeros(3))
    acts.append(compose_actions(traj.actions[t : t + timeshift]).as_array())
    actions = torch.as_tensor(np.stack(acts), dtype=states.dtype)
    shifts = torch.tensor([1] * k + [timeshift], dtype=torch.long)
    return frames, actions, shifts


def sample_timeshifts(
    trajs: Sequence[Trajectory],
    windows: Sequence[Tuple[int, int]],
    low: int,
    high: int,
    generator: torch.Generator,
) -> List[int]:
    """
    Uniform timeshift in [low, high] per window, capped so the target stays
    inside its trajectory. Windows come from ``build_windows(..., low)``, so
    the range is never empty.
    """
    if high == low:
        return [low] * len(windows)
    shifts = []
    for i, t in windows:
        top = min(high, trajs[i].n - t)
        shifts.append(int(torch.randint(low, top + 1, (1,), generator=generator)))
    return shifts


def collate_windows(
    states: Sequence[torch.Tensor],
    trajs: Sequence[Trajectory],
    windows: Sequence[Tuple[int, int]],
    k: int,
    timeshifts: Sequence[int],
    style: str,
    generator: torch.Generator,
    embedder_pad_id: int,
    embedder_null_id: int,
) -> WMBatch:
    frames, actions, shifts, instr = [], [], [], []
    for (i, t), shift in zip(windows, timeshifts):
        f, a, s = window_arrays(states[i], trajs[i], t, k, shift)
        frames.append(f)
        actions.append(a)
        shifts.append(s)
        instr.append(pick_instruction(trajs[i], style, generator) or [embedder_null_id])
    width = max(len(r) for r in instr)
    ids = torch.tensor([r + [embedder_pad_id] * (width - len(r)) for r in instr], dtype=torch.long)
    return WMBatch(torch.stack(frames), torch.stack(actions), torch.stack(shifts), ids)


def sample_levels(
    batch: int, frames: int, levels: int, df_mode: str, generator: torch.Generator
) -> torch.Tensor:
    """Independent uniform levels in [0, L] per frame, or clean context with a noised target."""
    if df_mode == "independent":
        return torch.randint(0, levels + 1, (batch, frames), generator=generator)
    out = torch.zeros(batch, frames, dtype=torch.long)
    out[:, -1] = torch.randint(1, levels + 1, (batch,), generator=generator)
    return out


def wm_train_step(
    model: WorldModel,
    optimizer: torch.optim.Optimizer,
    batch: WMBatch,
    generator: torch.Generator,
    df_mode: str = "independent",
    scheduler: Optional[torch.optim.lr_scheduler.LRScheduler] = None,
) -> float:
    model.train()
    b, f, d = batch.states.shape
    levels = sample_levels(b, f, model.levels, df_mode, generator)
    eps = torch.randn(b, f, d, generator=generator, dtype=batch.states.dtype)
    loss = model.diffusion_loss(batch.states, batch.actions, batch.timeshifts, levels, eps, batch.instr_ids)
    check_finite({"loss": loss}, phase="world model", max_level=int(levels.max()))
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    if scheduler is not None:
        scheduler.step()
    return float(loss.detach())


class VAETrainer:
    """Minibatch VAE training over every observation of the training split."""

    def __init__(self, vae: VAE, cfg: VAEConfig, trajs: Sequence[Trajectory], seed: int) -> None:
        self.vae = vae
        self.cfg = cfg
        self.frames = torch.as_tensor(np.concatenate([t.observations for t in trajs]), dtype=torch.float32)
        if len(self.frames) == 0:
            raise DatasetError("no observations to train the VAE on")
        self.optimizer, self.scheduler = make_optimizer(vae.parameters(), cfg.lr, cfg.warmup_steps)
        self.generator = torch.Generator().manual_seed(seed)
        self.step_count = 0

    def step(self) -> Dict[str, float]:
        idx = torch.randint(len(self.frames), (self.cfg.batch_size,), generator=self.generator)
        losses = vae_train_step(
            self.vae, self.optimizer, self.frames[idx], self.cfg.beta, self.generator, self.scheduler
        )
        self.step_count += 1
        return losses

    def state_dict(self) -> Dict[str, Any]:
        return {
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
            "generator": self.generator.get_state(),
            "step": self.step_count,
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.optimizer.load_state_dict(state["optimizer"])
        self.scheduler.load_state_dict(state["scheduler"])
        self.generator.set_state(state["generator"])
        self.step_count = int(state["step"])


class WorldModelTrainer:
    """
    Diffusion-forcing training of the world model over frozen codec states.
    Each window's target lies ``t_s`` steps ahead, with ``t_s`` drawn from
    [timeshift, max_timeshift].
    """

    def __init__(
        self,
        model: WorldModel,
        codec: StateCodec,
        cfg: WMConfig,
        trajs: Sequence[Trajectory],
        seed: int,
    ) -> None:
        self.model = model
        self.cfg = cfg
        self.trajs = list(trajs)
        self.states = encode_states(codec, self.trajs)
        self.windows = build_windows(self.trajs, cfg.context_size, cfg.timeshift)
        if not self.windows:
            raise DatasetError(f"no trajectory is long enough for context size k={cfg.context_size}")
        self.optimizer, self.scheduler = make_optimizer(model.parameters(), cfg.lr, cfg.warmup_steps)
        self.generator = torch.Generator().manual_seed(seed)
        self.step_count = 0

    def sample_batch(self) -> WMBatch:
        picks = torch.randint(len(self.windows), (self.cfg.batch_size,), generator=self.generator).tolist()
        windows = [self.windows[i] for i in picks]
        return collate_windows(
            self.states,
            self.trajs,
            windows,
            self.cfg.context_size,
            sample_timeshifts(self.trajs, windows, self.cfg.timeshift, self.cfg.max_timeshift, self.generator),
            self.cfg.style,
            self.generator,
            self.model.instructions.pad_id,
            self.model.instructions.null_id,
        )

    def step(self) -> Dict[str, float]:
        loss = wm_train_step(
            self.model, self.optimizer, self.sample_batch(), self.generator, self.cfg.df_mode, self.scheduler
        )
        self.step_count += 1
        return {"loss": loss}

    def state_dict(self) -> Dict[str, Any]:
        return {
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
            "generator": self.generator.get_state(),
            "step": self.step_count,
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.optimizer.load_state_dict(state["optimizer"])
        self.scheduler.load_state_dict(state["scheduler"])
        self.generator.set_state(state["generator"])
        self.step_count = int(state["step"])
