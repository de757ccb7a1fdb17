"""Joint objective of the unified-token model: discretized plan loss plus codebook-expected imagine loss."""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn.functional as F

from lcvn.errors import TokenizerError
from lcvn.tokenizers.bins import DIMENSIONS
from lcvn.tokenizers.space import TokenSpace


def restricted_log_softmax(logits: torch.Tensor, r: range) -> torch.Tensor:
    """Log-probabilities renormalised over the id range ``r`` (last dim indexed from r.start)."""
    return F.log_softmax(logits[..., r.start : r.stop], dim=-1)


def _action_nll(logits: torch.Tensor, tokens: torch.Tensor, space: TokenSpace) -> torch.Tensor:
    """Per-row -log P(b* | s in B_d) for bin targets; full-vocabulary cross-entropy for the stop token."""
    ranges = space.ranges()
    out = torch.empty(tokens.shape[0], dtype=logits.dtype, device=logits.device)
    handled = torch.zeros_like(tokens, dtype=torch.bool)
    for dim in DIMENSIONS:
        r = ranges[dim]
        rows = (tokens >= r.start) & (tokens < r.stop)
        if rows.any():
            logp = restricted_log_softmax(logits[rows], r)
            out[rows] = -logp.gather(-1, (tokens[rows] - r.start).unsqueeze(-1)).squeeze(-1)
            handled |= rows
    stop_rows = tokens == space.stop_token
    if stop_rows.any():
        out[stop_rows] = F.cross_entropy(logits[stop_rows], tokens[stop_rows], reduction="none")
        handled |= stop_rows
    if not bool(handled.all()):
        bad = tokens[~handled].tolist()
        raise TokenizerError(f"action targets {bad} lie outside the dx/dy/dyaw bin ranges and stop")
    return out


def plan_loss(
    action_logits: torch.Tensor,
    action_tokens: torch.Tensor,
    text_logits: torch.Tensor,
    text_tokens: torch.Tensor,
    space: TokenSpace,
    groups: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Mean over samples of the per-sample average action term, plus text
    cross-entropy over generated text targets (0 if there are none).
    ``groups`` assigns each action row to its sample; default is one sample.
    """
    nll = _action_nll(action_logits, action_tokens, space)
    if groups is None:
        groups = torch.zeros_like(action_tokens)
    n_groups = int(groups.max()) + 1 if groups.numel() else 0
    sums = torch.zeros(n_groups, dtype=nll.dtype, device=nll.device).index_add(0, groups, nll)
    counts = torch.zeros(n_groups, dtype=nll.dtype, device=nll.device).index_add(0, groups, torch.ones_like(nll))
    action_term = (sums / counts.clamp_min(1.0)).mean() if n_groups else nll.new_zeros(())
    if text_tokens.numel() == 0:
        return action_term
    return action_term + F.cross_entropy(text_logits, text_tokens)


def imagine_loss(
    visual_logits: torch.Tensor, patches: torch.Tensor, entries: torch.Tensor, space: TokenSpace
) -> torch.Tensor:
    """
    (1/m) sum_j sum_k |u_j - c_k|^2 P(s_j = c_k), averaged over the batch.
    visual_logits: (..., m, V); patches: (..., m, D); entries: (K, D).
    """
    if visual_logits.numel() == 0:
        return visual_logits.new_zeros(())
    probs = restricted_log_softmax(visual_logits, space.ranges()["visual"]).exp()
    entries = entries.to(dtype=patches.dtype, device=patches.device)
    dist = (patches.unsqueeze(-2) - entries).pow(2).sum(dim=-1)
    return (dist.to(probs.dtype) * probs).sum(dim=-1).mean()


def joint_loss(plan: torch.Tensor, imagine: torch.Tensor, lambda_joint: float) -> torch.Tensor:
    return plan + lambda_joint * imagine
