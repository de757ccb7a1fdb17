from __future__ import annotations

import torch
from torch import nn

from lcvn.config import UniConfig
from lcvn.errors import ShapeError
from lcvn.worldmodel.ldit import causal_mask


class CausalBlock(nn.Module):
    def __init__(self, width: int, heads: int, mlp_ratio: int = 4) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, width * mlp_ratio),
            nn.GELU(),
            nn.Linear(width * mlp_ratio, width),
        )

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, attn_mask=mask, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


class UniTransformer(nn.Module):
    """
    Decoder-only transformer over the whole token space with one shared output
    head. Right padding needs no key mask: a causal position never sees later pads.
    """

    def __init__(self, vocab_size: int, width: int = 64, depth: int = 4, heads: int = 4, max_len: int = 512) -> None:
        super().__init__()
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.tokens = nn.Embedding(vocab_size, width)
        self.positions = nn.Embedding(max_len, width)
        self.blocks = nn.ModuleList([CausalBlock(width, heads) for _ in range(depth)])
        self.norm = nn.LayerNorm(width)
        self.head = nn.Linear(width, vocab_size)

    @classmethod
    def from_config(cls, cfg: UniConfig, vocab_size: int) -> "UniTransformer":
        return cls(vocab_size, cfg.width, cfg.depth, cfg.heads, cfg.budget)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """(B, T) token ids -> (B, T, vocab_size) next-token logits."""
        if ids.dim() == 1:
            return self(ids.unsqueeze(0))[0]
        b, t = ids.shape
        if t > self.max_len:
            raise ShapeError(f"sequence of {t} tokens exceeds the model context {self.max_len}")
        pos = torch.arange(t, device=ids.device)
        x = self.tokens(ids) + self.positions(pos)[None]
        mask = causal_mask(t, ids.device)
        for block in self.blocks:
            x = block(x, mask)
        return self.head(self.norm(x))
