"""Rewards, returns and losses of the latent actor-critic."""

from __future__ import annotations

from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from lcvn.errors import ShapeError

ALIGNMENT_MARGIN = 0.2


def intrinsic_reward(s_expert: torch.Tensor, s_imagined: torch.Tensor) -> torch.Tensor:
    """
    (s_E . s_pi) / max(|s_E|, |s_pi|)^2 over the last dim, in [-1, 1].
    Both vectors zero gives 1; exactly one zero gives 0.
    """
    dot = (s_expert * s_imagined).sum(dim=-1)
    scale = torch.maximum(s_expert.norm(dim=-1), s_imagined.norm(dim=-1)).pow(2)
    both_zero = scale == 0
    safe = torch.where(both_zero, torch.ones_like(scale), scale)
    return torch.where(both_zero, torch.ones_like(dot), dot / safe)


def lambda_returns(
    rewards: Sequence[float] | torch.Tensor,
    values: Sequence[float] | torch.Tensor,
    gamma: float,
    lam: float,
) -> torch.Tensor:
    """
    Backward recursion V_k = r_k + gamma * ((1 - lam) * v_{k+1} + lam * V_{k+1}),
    bootstrapped with V_H = v_H. ``values`` has one more entry than ``rewards``.
    """
    r = torch.as_tensor(rewards, dtype=torch.float64) if not isinstance(rewards, torch.Tensor) else rewards
    v = torch.as_tensor(values, dtype=torch.float64) if not isinstance(values, torch.Tensor) else values
    if v.shape[-1] != r.shape[-1] + 1:
        raise ShapeError(f"expected {r.shape[-1] + 1} values for {r.shape[-1]} rewards, got {v.shape[-1]}")
    lengths = torch.full(r.shape[:-1], r.shape[-1], dtype=torch.long)
    return lambda_returns_batched(r, v, gamma, lam, lengths)


def lambda_returns_batched(
    rewards: torch.Tensor,
    values: torch.Tensor,
    gamma: float,
    lam: float,
    lengths: torch.Tensor,
) -> torch.Tensor:
    """
    rewards: (..., H); values: (..., H + 1); lengths: (...,) valid horizon per row.
    Row i bootstraps from values[i, lengths[i]]; entries at k >= lengths[i] are
    filled with the bootstrap value and must be masked by the caller.
    """
    horizon = rewards.shape[-1]
    if values.shape[-1] != horizon + 1:
        raise ShapeError(f"values must have H + 1 = {horizon + 1} entries, got {values.shape[-1]}")
    out = []
    nxt = values[..., horizon]
    for k in reversed(range(horizon)):
        boot = values[..., k + 1]
        nxt = torch.where(lengths <= k + 1, boot, nxt)
        ret = rewards[..., k] + gamma * ((1.0 - lam) * boot + lam * nxt)
        ret = torch.where(lengths <= k, values[..., k], ret)
        out.append(ret)
        nxt = ret
    return torch.stack(out[::-1], dim=-1)


def _masked_mean(x: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    if mask is None:
        return x.mean()
    mask = mask.to(x.dtype)
    return (x * mask).sum() / mask.sum().clamp_min(1.0)


def critic_loss(values: torch.Tensor, returns: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean of 1/2 (v - sg(V_lambda))^2."""
    return _masked_mean(0.5 * (values - returns.detach()).pow(2), mask)


def actor_loss(
    returns: torch.Tensor,
    kl: torch.Tensor,
    alignment: torch.Tensor,
    alpha1: float,
    alpha2: float,
    mask: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Mean over steps of -V_lambda + alpha1 * KL + alpha2 * L_ins."""
    return _masked_mean(-returns + alpha1 * kl + alpha2 * alignment, mask)


def instruction_alignment_loss(
    states: torch.Tensor,
    instructions: torch.Tensor,
    margin: float = ALIGNMENT_MARGIN,
    same_instruction: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    In-batch contrastive cosine loss: mean over matched pairs of (1 - cos)
    plus mean over mismatched pairs of max(0, cos - margin).

    ``same_instruction`` is an optional (B, B) bool mask of pairs that carry
    the same instruction; those are never treated as mismatched.
    """
    if states.shape[0] < 2:
        raise ShapeError("instruction alignment needs a batch of at least 2 pairs")
    cos = F.normalize(states, dim=-1) @ F.normalize(instructions, dim=-1).transpose(0, 1)
    n = cos.shape[0]
    negatives = ~torch.eye(n, dtype=torch.bool, device=cos.device)
    if same_instruction is not None:
        if same_instruction.shape != (n, n):
            raise ShapeError(f"same_instruction mask must be ({n}, {n}), got {tuple(same_instruction.shape)}")
        negatives &= ~same_instruction.to(cos.device)
    matched = (1.0 - cos.diagonal()).mean()
    if not negatives.any():
        return matched
    mismatched = F.relu(cos[negatives] - margin).mean()
    return matched + mismatched


def same_instruction_mask(instr_ids: torch.Tensor) -> torch.Tensor:
    """(B, B) True where two rows of padded instruction ids are identical."""
    return (instr_ids[:, None, :] == instr_ids[None, :, :]).all(dim=-1)
