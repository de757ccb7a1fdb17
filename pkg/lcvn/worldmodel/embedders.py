"""Instruction and condition embedders shared by the world model and the agents."""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import torch
from einops import rearrange
from torch import nn

from lcvn.datagen.vocabulary import VOCABULARY

MAX_INSTRUCTION_TOKENS = 32


def sinusoidal_features(x: torch.Tensor, n_freqs: int, max_period: float = 10_000.0) -> torch.Tensor:
    """(...,) scalars -> (..., 2 * n_freqs) sine/cosine features."""
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(n_freqs, dtype=x.dtype, device=x.device) / max(n_freqs, 1)
    )
    args = x.unsqueeze(-1) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def _mlp(in_dim: int, width: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, width), nn.SiLU(), nn.Linear(width, width))


class InstructionEmbedder(nn.Module):
    """
    Learned word table + position table, one self-attention layer and a
    LayerNorm. Ids ``0..V-1`` are words, ``V`` is padding and ``V + 1`` is the
    null token that stands in for an empty (or disabled) instruction.
    """

    def __init__(self, dim: int = 32, n_words: int = len(VOCABULARY), heads: int = 4) -> None:
        super().__init__()
        self.dim = dim
        self.n_words = n_words
        self.pad_id = n_words
        self.null_id = n_words + 1
        self.tokens = nn.Embedding(n_words + 2, dim)
        self.positions = nn.Embedding(MAX_INSTRUCTION_TOKENS, dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm = nn.LayerNorm(dim)

    def batch_tokens(self, instructions: Sequence[Sequence[int]], device: torch.device | None = None) -> torch.Tensor:
        """Pad vocabulary-index sequences into a (B, T) id tensor; empty ones become the null token."""
        rows: List[List[int]] = [list(map(int, ins))[:MAX_INSTRUCTION_TOKENS] or [self.null_id] for ins in instructions]
        width = max(len(r) for r in rows)
        padded = [r + [self.pad_id] * (width - len(r)) for r in rows]
        return torch.tensor(padded, dtype=torch.long, device=device)

    def null_tokens(self, batch: int, device: torch.device | None = None) -> torch.Tensor:
        return torch.full((batch, 1), self.null_id, dtype=torch.long, device=device)

    def forward(self, ids: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(B, T) ids -> ((B, T, dim) embeddings, (B, T) padding mask)."""
        pad_mask = ids == self.pad_id
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.tokens(ids) + self.positions(positions)[None]
        attended, _ = self.attn(x, x, x, key_padding_mask=pad_mask, need_weights=False)
        return self.norm(x + attended), pad_mask

    def pooled(self, ids: torch.Tensor) -> torch.Tensor:
        """Masked mean over tokens: (B, dim)."""
        emb, pad_mask = self(ids)
        keep = (~pad_mask).to(emb.dtype).unsqueeze(-1)
        return (emb * keep).sum(dim=1) / keep.sum(dim=1).clamp_min(1.0)


class ConditionEmbedder(nn.Module):
    """
    e_cond = e_action + e_timeshift + e_level. Each input is featurised with
    sine/cosine encodings and mapped by a 2-layer MLP to ``width``. Disabled
    inputs use a learned null vector instead.
    """

    def __init__(
        self,
        width: int,
        n_freqs: int = 16,
        use_action: bool = True,
        use_timeshift: bool = True,
    ) -> None:
        super().__init__()
        self.n_freqs = n_freqs
        self.use_action = use_action
        self.use_timeshift = use_timeshift
        self.action = _mlp(3 * 2 * n_freqs, width)
        self.timeshift = _mlp(2 * n_freqs, width)
        self.level = _mlp(2 * n_freqs, width)
        self.null_action = nn.Parameter(torch.zeros(width))
        self.null_timeshift = nn.Parameter(torch.zeros(width))

    def forward(self, actions: torch.Tensor, timeshifts: torch.Tensor, levels: torch.Tensor) -> torch.Tensor:
        """
        actions: (..., 3) normalised (dx, dy, dyaw); timeshifts, levels: (...,).
        Returns (..., width).
        """
        if self.use_action:
            feats = sinusoidal_features(actions, self.n_freqs, max_period=100.0)
            e_action = self.action(rearrange(feats, "... d f -> ... (d f)"))
        else:
            e_action = self.null_action.expand(*levels.shape, -1)
        if self.use_timeshift:
            e_shift = self.timeshift(sinusoidal_features(timeshifts.to(actions.dtype), self.n_freqs))
        else:
            e_shift = self.null_timeshift.expand(*levels.shape, -1)
        e_level = self.level(sinusoidal_features(levels.to(actions.dtype), self.n_freqs))
        return e_action + e_shift + e_level
