"""
Language-conditioned world model: instruction embedder, condition embedder,
LDiT and noise schedule, trained with per-frame (diffusion forcing) noise.

A window holds k context frames followed by one target frame. Frame i is
conditioned on the action that led into it, the frames elapsed since the
previous window frame and its own noise level.
"""

from __future__ import annotations

from collections import deque
from typing import Deque, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from lcvn.config import WMConfig
from lcvn.errors import ShapeError
from lcvn.worldmodel.embedders import ConditionEmbedder, InstructionEmbedder
from lcvn.worldmodel.ldit import LDiT
from lcvn.worldmodel.schedule import NoiseSchedule, apply_noise


def pad_context(frames: Sequence[torch.Tensor], k: int) -> List[torch.Tensor]:
    """Last k frames, left-padded by repeating the earliest frame."""
    if not frames:
        raise ShapeError("context needs at least one frame")
    frames = list(frames)[-k:]
    return [frames[0]] * (k - len(frames)) + frames


def ddim_levels(levels: int, steps: int) -> List[int]:
    """Strictly decreasing level sequence from L to 0 with ``steps`` transitions."""
    if not 1 <= steps <= levels:
        raise ShapeError(f"sampler steps must lie in [1, {levels}], got {steps}")
    grid = torch.linspace(levels, 0, steps + 1, dtype=torch.float64).round().long().tolist()
    return grid


class WorldModel(nn.Module):
    def __init__(
        self,
        state_dim: int,
        context_size: int = 2,
        width: int = 64,
        depth: int = 2,
        heads: int = 4,
        instr_dim: int = 32,
        levels: int = 64,
        cond_freqs: int = 16,
        use_language: bool = True,
        use_action: bool = True,
        use_timeshift: bool = True,
        step_size: float = 1.0,
    ) -> None:
        super().__init__()
        self.state_dim = state_dim
        self.context_size = context_size
        self.use_language = use_language
        self.instructions = InstructionEmbedder(instr_dim)
        self.conditions = ConditionEmbedder(width, cond_freqs, use_action, use_timeshift)
        self.ldit = LDiT(state_dim, width, depth, heads, instr_dim, context_size + 1)
        self.schedule = NoiseSchedule(levels)
        self.register_buffer("step_size", torch.tensor(float(step_size)))

    @classmethod
    def from_config(cls, cfg: WMConfig, state_dim: int, step_size: float) -> "WorldModel":
        return cls(
            state_dim=state_dim,
            context_size=cfg.context_size,
            width=cfg.model_width,
            depth=cfg.depth,
            heads=cfg.heads,
            instr_dim=cfg.instr_dim,
            levels=cfg.levels,
            cond_freqs=cfg.cond_freqs,
            use_language=cfg.use_language,
            use_action=cfg.use_action,
            use_timeshift=cfg.use_timeshift,
            step_size=step_size,
        )

    @property
    def levels(self) -> int:
        return self.schedule.levels

    def embed_instruction(self, ids: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        if not self.use_language:
            ids = self.instructions.null_tokens(ids.shape[0], ids.device)
        return self.instructions(ids)

    def normalize_actions(self, actions: torch.Tensor) -> torch.Tensor:
        """Planar displacements divided by the dataset's average step size; dyaw unchanged."""
        scale = torch.ones(3, dtype=actions.dtype, device=actions.device)
        scale[:2] = self.step_size.to(actions.dtype)
        return actions / scale

    def forward(
        self,
        noisy: torch.Tensor,
        actions: torch.Tensor,
        timeshifts: torch.Tensor,
        levels: torch.Tensor,
        instr_ids: torch.Tensor,
    ) -> torch.Tensor:
        """Predicted noise for every frame of the window, (B, k + 1, state_dim)."""
        cond = self.conditions(self.normalize_actions(actions), timeshifts, levels)
        instr, pad_mask = self.embed_instruction(instr_ids)
        return self.ldit(noisy, cond, instr, pad_mask)

    def diffusion_loss(
        self,
        states: torch.Tensor,
        actions: torch.Tensor,
        timeshifts: torch.Tensor,
        levels: torch.Tensor,
        eps: torch.Tensor,
        instr_ids: torch.Tensor,
    ) -> torch.Tensor:
        """Mean squared noise-prediction error over frames with level > 0 (0 if there are none)."""
        noisy = apply_noise(states, levels, eps, self.schedule)
        pred = self(noisy, actions, timeshifts, levels, instr_ids)
        per_frame = F.mse_loss(pred, eps, reduction="none").mean(dim=-1)
        mask = (levels > 0).to(per_frame.dtype)
        return (per_frame * mask).sum() / mask.sum().clamp_min(1.0)

    def predict_next_latent(
        self,
        context: torch.Tensor,
        action: torch.Tensor,
        instr_ids: torch.Tensor,
        timeshift: int = 1,
        steps: int = 8,
        context_actions: Optional[torch.Tensor] = None,
        noise: Optional[torch.Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        """
        Deterministic DDIM sampling of the target frame from pure noise at level L
        down to 0 in ``steps`` steps, context frames held clean at level 0.

        context: (B, j, D) with 1 <= j; shorter contexts are padded by repeating
        the earliest frame. action: (B, 3) raw action into the target. Gradients
        flow through the sampler unless the caller disables them.
        """
        b, _, d = context.shape
        k = self.context_size
        frames = pad_context(list(context.unbind(dim=1)), k)
        ctx = torch.stack(frames, dim=1)
        if context_actions is None:
            ctx_actions = torch.zeros(b, k, 3, dtype=context.dtype, device=context.device)
        else:
            acts = pad_context(list(context_actions.unbind(dim=1)), k)
            ctx_actions = torch.stack(acts, dim=1)
            # padded copies did not move
            n_pad = k - min(context_actions.shape[1], k)
            if n_pad:
                ctx_actions[:, :n_pad] = 0.0
        actions = torch.cat([ctx_actions, action.unsqueeze(1)], dim=1)
        timeshifts = torch.ones(b, k + 1, dtype=torch.long, device=context.device)
        timeshifts[:, -1] = timeshift

        if noise is None:
            noise = torch.randn(b, d, generator=generator, dtype=context.dtype)
        x = noise.to(device=context.device, dtype=context.dtype)
        instr_emb, pad_mask = self.embed_instruction(instr_ids)
        grid = ddim_levels(self.levels, steps)
        for level, next_level in zip(grid[:-1], grid[1:]):
            lv = torch.zeros(b, k + 1, dtype=torch.long, device=context.device)
            lv[:, -1] = level
            window = torch.cat([ctx, x.unsqueeze(1)], dim=1)
            cond = self.conditions(self.normalize_actions(actions), timeshifts, lv)
            eps = self.ldit(window, cond, instr_emb, pad_mask)[:, -1]
            ab = self.schedule.alpha_bar(torch.tensor(level), x.dtype)
            ab_next = self.schedule.alpha_bar(torch.tensor(next_level), x.dtype)
            x0 = (x - (1.0 - ab).sqrt() * eps) / ab.sqrt()
            x = ab_next.sqrt() * x0 + (1.0 - ab_next).sqrt() * eps
        return x

    def rollout_latents(
        self,
        start: torch.Tensor,
        actions: torch.Tensor,
        instr_ids: torch.Tensor,
        timeshift: int = 1,
        steps: int = 8,
        seed: int = 0,
    ) -> torch.Tensor:
        """
        Feed predictions back recursively. start: (B, D) or (B, j, D) context;
        actions: (B, T, 3). Returns (B, T, D), one latent per action.
        """
        if actions.dim() != 3 or actions.shape[1] == 0:
            raise ShapeError(f"rollout needs a non-empty (B, T, 3) action sequence, got {tuple(actions.shape)}")
        ctx = start.unsqueeze(1) if start.dim() == 2 else start
        k = self.context_size
        history: Deque[torch.Tensor] = deque(ctx.unbind(dim=1), maxlen=k)
        moves: Deque[torch.Tensor] = deque(
            [torch.zeros_like(actions[:, 0])] * len(history), maxlen=k
        )
        generator = torch.Generator().manual_seed(seed)
        out = []
        for t in range(actions.shape[1]):
            nxt = self.predict_next_latent(
                torch.stack(list(history), dim=1),
                actions[:, t],
                instr_ids,
                timeshift=timeshift,
                steps=steps,
                context_actions=torch.stack(list(moves), dim=1),
                generator=generator,
            )
            out.append(nxt)
            history.append(nxt)
            moves.append(actions[:, t])
        return torch.stack(out, dim=1)
