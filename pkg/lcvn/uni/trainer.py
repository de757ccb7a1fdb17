from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import torch

from lcvn.config import STYLES, UniConfig
from lcvn.datagen.trajectory import Trajectory
from lcvn.errors import DatasetError, FrozenModelError
from lcvn.infra.checkpoint import state_checksum
from lcvn.infra.optim import check_finite, make_optimizer
from lcvn.tokenizers.space import TokenSpace
from lcvn.tokenizers.vq import Codebook
from lcvn.uni.losses import imagine_loss, joint_loss, plan_loss
from lcvn.uni.model import UniTransformer
from lcvn.uni.sequence import UniSequence, build_sample, encode_frames

logger = logging.getLogger(__name__)


@dataclass
class UniBatch:
    tokens: torch.Tensor  # (B, T) right-padded with <pad>
    action_rows: torch.Tensor  # (A, 2) (sample, position of the predicting logit)
    action_tokens: torch.Tensor  # (A,)
    action_groups: torch.Tensor  # (A,)
    text_rows: torch.Tensor  # (X, 2)
    text_tokens: torch.Tensor  # (X,)
    obs_rows: torch.Tensor  # (M, m, 2), moving samples only
    patches: torch.Tensor  # (M, m, D)


def _rows(pairs: List[Tuple[int, int]]) -> torch.Tensor:
    return torch.tensor(pairs, dtype=torch.long).reshape(-1, 2)


def collate_sequences(samples: Sequence[UniSequence], pad_id: int) -> UniBatch:
    """Logits at position p - 1 predict the token at target position p."""
    width = max(len(s) for s in samples)
    tokens = torch.full((len(samples), width), pad_id, dtype=torch.long)
    action_rows, action_tokens, groups = [], [], []
    text_rows, text_tokens = [], []
    obs_rows, patches = [], []
    for i, s in enumerate(samples):
        tokens[i, : len(s)] = torch.from_numpy(s.tokens)
        for p in s.action_targets:
            action_rows.append((i, p - 1))
            action_tokens.append(int(s.tokens[p]))
            groups.append(i)
        for p in s.text_targets:
            text_rows.append((i, p - 1))
            text_tokens.append(int(s.tokens[p]))
        if s.obs_targets:
            obs_rows.append([(i, p - 1) for p in s.obs_targets])
            patches.append(s.next_patches)
    obs_index = torch.tensor(obs_rows, dtype=torch.long) if obs_rows else torch.zeros(0, 0, 2, dtype=torch.long)
    return UniBatch(
        tokens=tokens,
        action_rows=_rows(action_rows),
        action_tokens=torch.tensor(action_tokens, dtype=torch.long),
        action_groups=torch.tensor(groups, dtype=torch.long),
        text_rows=_rows(text_rows),
        text_tokens=torch.tensor(text_tokens, dtype=torch.long),
        obs_rows=obs_index,
        patches=torch.as_tensor(np.stack(patches) if patches else np.zeros((0, 0, 0)), dtype=torch.float32),
    )


def batch_losses(
    model: UniTransformer, batch: UniBatch, space: TokenSpace, entries: torch.Tensor, lambda_joint: float
) -> Dict[str, torch.Tensor]:
    """One forward pass; plan, imagine and joint losses from the same logits."""
    logits = model(batch.tokens)
    a = logits[batch.action_rows[:, 0], batch.action_rows[:, 1]]
    x = logits[batch.text_rows[:, 0], batch.text_rows[:, 1]]
    v = logits[batch.obs_rows[..., 0], batch.obs_rows[..., 1]]
    plan = plan_loss(a, batch.action_tokens, x, batch.text_tokens, space, groups=batch.action_groups)
    imagine = imagine_loss(v, batch.patches, entries, space)
    return {"loss": joint_loss(plan, imagine, lambda_joint), "plan": plan, "imagine": imagine}


def uni_train_step(
    model: UniTransformer,
    optimizer: torch.optim.Optimizer,
    batch: UniBatch,
    space: TokenSpace,
    entries: torch.Tensor,
    cfg: UniConfig,
    scheduler: Any = None,
) -> Dict[str, float]:
    """
    ``joint``: one forward, one joint loss, one update. ``interleave``: two
    sub-steps, first an update on the plan loss, then one on the imagine loss.
    """
    model.train()
    if cfg.mode == "joint":
        losses = batch_losses(model, batch, space, entries, cfg.lambda_joint)
        check_finite(losses, phase="uni")
        optimizer.zero_grad(set_to_none=True)
        losses["loss"].backward()
        optimizer.step()
    else:
        first = batch_losses(model, batch, space, entries, cfg.lambda_joint)
        check_finite(first, phase="uni-plan")
        optimizer.zero_grad(set_to_none=True)
        first["plan"].backward()
        optimizer.step()
        second = batch_losses(model, batch, space, entries, cfg.lambda_joint)
        check_finite(second, phase="uni-imagine")
        optimizer.zero_grad(set_to_none=True)
        (cfg.lambda_joint * second["imagine"]).backward()
        optimizer.step()
        losses = {
            "loss": first["plan"] + cfg.lambda_joint * second["imagine"],
            "plan": first["plan"],
            "imagine": second["imagine"],
        }
    if scheduler is not None:
        scheduler.step()
    return {k: float(v.detach()) for k, v in losses.items()}


def tokenizer_checksum(codebook: Codebook) -> str:
    return state_checksum({"entries": codebook.entries})


class UniTrainer:
    def __init__(
        self,
        model: UniTransformer,
        space: TokenSpace,
        codebook: Codebook,
        cfg: UniConfig,
        trajs: Sequence[Trajectory],
        seed: int,
    ) -> None:
        self.model = model
        self.space = space
        self.codebook = codebook
        self.cfg = cfg
        self.trajs = [t for t in trajs if t.n >= 1]
        if not self.trajs:
            raise DatasetError("no trajectories for unified-model training")
        self.frames = [encode_frames(t, codebook) for t in self.trajs]
        self.steps: List[Tuple[int, int]] = [(i, t) for i, traj in enumerate(self.trajs) for t in range(traj.n)]
        self.entries = torch.from_numpy(codebook.entries.astype(np.float32))
        self.checksum = tokenizer_checksum(codebook)
        self.optimizer, self.scheduler = make_optimizer(model.parameters(), cfg.lr, cfg.warmup_steps)
        self.generator = torch.Generator().manual_seed(seed)
        self.step_count = 0
        logger.info("uni trainer ready", extra={"samples": len(self.steps), "mode": cfg.mode})

    def _style(self) -> str:
        if self.cfg.style != "all":
            return self.cfg.style
        return STYLES[int(torch.randint(len(STYLES), (1,), generator=self.generator))]

    def sample_batch(self) -> UniBatch:
        picks = torch.randint(len(self.steps), (self.cfg.batch_size,), generator=self.generator).tolist()
        samples = []
        for p in picks:
            i, t = self.steps[p]
            samples.append(build_sample(self.trajs[i], t, self._style(), self.space, self.codebook, self.cfg, self.frames[i]))
        return collate_sequences(samples, self.space.control("<pad>"))

    def step(self) -> Dict[str, float]:
        losses = uni_train_step(
            self.model, self.optimizer, self.sample_batch(), self.space, self.entries, self.cfg, self.scheduler
        )
        self.step_count += 1
        return losses

    def verify_tokenizers(self) -> None:
        current = tokenizer_checksum(self.codebook)
        if current != self.checksum:
            raise FrozenModelError("tokenizer codebook changed during unified-model training")

    def state_dict(self) -> Dict[str, Any]:
        return {
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
            "generator": self.generator.get_state(),
            "step": self.step_count,
            "tokenizer_checksum": self.checksum,
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.optimizer.load_state_dict(state["optimizer"])
        self.scheduler.load_state_dict(state["scheduler"])
        self.generator.set_state(state["generator"])
        self.step_count = int(state["step"])
