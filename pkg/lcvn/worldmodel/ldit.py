"""
Language-conditioned diffusion transformer over a window of frame states.

Each frame is one token. Blocks apply, in order: AdaLN-modulated causal
self-attention, cross-attention from frames to instruction tokens, and an
AdaLN-modulated MLP. The modulation of every frame comes from its own
condition vector (action, timeshift, noise level).
"""

from __future__ import annotations

import torch
from torch import nn

from lcvn.errors import ShapeError


def modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale) + shift


def causal_mask(n: int, device: torch.device | None = None) -> torch.Tensor:
    """Boolean (n, n) mask, True where attention is disallowed."""
    return torch.triu(torch.ones(n, n, dtype=torch.bool, device=device), diagonal=1)


class LDiTBlock(nn.Module):
    def __init__(self, width: int, heads: int, instr_dim: int, mlp_ratio: int = 4) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(width, elementwise_affine=False)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm_cross = nn.LayerNorm(width)
        self.cross = nn.MultiheadAttention(width, heads, kdim=instr_dim, vdim=instr_dim, batch_first=True)
        self.norm2 = nn.LayerNorm(width, elementwise_affine=False)
        self.mlp = nn.Sequential(
            nn.Linear(width, width * mlp_ratio),
            nn.GELU(),
            nn.Linear(width * mlp_ratio, width),
        )
        # shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp
        self.adaLN = nn.Sequential(nn.SiLU(), nn.Linear(width, width * 6))

    def forward(
        self,
        x: torch.Tensor,
        cond: torch.Tensor,
        instr: torch.Tensor,
        instr_pad_mask: torch.Tensor | None,
    ) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.adaLN(cond).chunk(6, dim=-1)

        h = modulate(self.norm1(x), shift_msa, scale_msa)
        attn_out, _ = self.attn(h, h, h, attn_mask=causal_mask(x.shape[1], x.device), need_weights=False)
        x = x + gate_msa * attn_out

        h = self.norm_cross(x)
        cross_out, _ = self.cross(h, instr, instr, key_padding_mask=instr_pad_mask, need_weights=False)
        x = x + cross_out

        h = modulate(self.norm2(x), shift_mlp, scale_mlp)
        return x + gate_mlp * self.mlp(h)


class LDiT(nn.Module):
    def __init__(
        self,
        state_dim: int,
        width: int,
        depth: int,
        heads: int,
        instr_dim: int,
        frames: int,
    ) -> None:
        super().__init__()
        self.state_dim = state_dim
        self.frames = frames
        self.proj_in = nn.Linear(state_dim, width)
        self.frame_pos = nn.Parameter(torch.zeros(1, frames, width))
        nn.init.normal_(self.frame_pos, mean=0.0, std=0.02)
        self.blocks = nn.ModuleList([LDiTBlock(width, heads, instr_dim) for _ in range(depth)])
        self.norm_out = nn.LayerNorm(width, elementwise_affine=False)
        self.adaLN_out = nn.Sequential(nn.SiLU(), nn.Linear(width, width * 2))
        self.proj_out = nn.Linear(width, state_dim)

    def forward(
        self,
        noisy: torch.Tensor,
        cond: torch.Tensor,
        instr: torch.Tensor,
        instr_pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """
        noisy: (B, F, state_dim) window of noised states, F = k + 1
        cond: (B, F, width) per-frame condition vectors
        instr: (B, T, instr_dim) instruction token embeddings
        Returns the predicted noise, (B, F, state_dim).
        """
        if noisy.dim() != 3 or noisy.shape[1] != self.frames or noisy.shape[2] != self.state_dim:
            raise ShapeError(
                f"expected window (B, {self.frames}, {self.state_dim}), got {tuple(noisy.shape)}"
            )
        if cond.shape[:2] != noisy.shape[:2]:
            raise ShapeError(f"condition shape {tuple(cond.shape)} does not match window {tuple(noisy.shape)}")
        if instr.shape[0] != noisy.shape[0]:
            raise ShapeError(f"instruction batch {instr.shape[0]} does not match window batch {noisy.shape[0]}")
        x = self.proj_in(noisy) + self.frame_pos
        for block in self.blocks:
            x = block(x, cond, instr, instr_pad_mask)
        shift, scale = self.adaLN_out(cond).chunk(2, dim=-1)
        return self.proj_out(modulate(self.norm_out(x), shift, scale))
