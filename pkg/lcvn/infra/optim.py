"""Optimiser construction and loss sanity checks shared by every training phase."""

from __future__ import annotations

from typing import Dict, Iterable

import torch
from torch import nn

from lcvn.errors import TrainingError


def make_optimizer(
    params: Iterable[nn.Parameter],
    lr: float,
    warmup_steps: int,
    weight_decay: float = 0.0,
) -> tuple[torch.optim.AdamW, torch.optim.lr_scheduler.LambdaLR]:
    """AdamW with a linear warm-up to ``lr`` over ``warmup_steps`` steps, constant afterwards."""
    optimizer = torch.optim.AdamW(list(params), lr=lr, weight_decay=weight_decay)
    warmup = max(int(warmup_steps), 0)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: min(1.0, (step + 1) / warmup) if warmup else 1.0
    )
    return optimizer, scheduler


def check_finite(losses: Dict[str, torch.Tensor], phase: str, **diagnostics: object) -> None:
    """Raise TrainingError carrying every loss term if any term is NaN or infinite."""
    if all(bool(torch.isfinite(v).all()) for v in losses.values()):
        return
    values = {k: float(v.detach().float().mean()) for k, v in losses.items()}
    raise TrainingError(f"non-finite {phase} loss", diagnostics={**values, **diagnostics})


def set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)
