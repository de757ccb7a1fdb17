"""Signed-bin tokenizer for continuous (dx, dy, dyaw) actions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

from lcvn.datagen.world import Action
from lcvn.errors import TokenizerError

DIMENSIONS: Tuple[str, ...] = ("dx", "dy", "dyaw")
_EPS = 1e-9


@dataclass(frozen=True)
class BinSpec:
    """
    resolution: units per bin (metres for dx/dy, radians for dyaw).
    max_index: largest bin index; representable range is +-max_index * resolution.
    base: token id of the first dx bin. Each dimension owns 2 * max_index + 1
    consecutive ids (signed index + max_index); the stop token follows dyaw.
    """

    resolution: float = 0.01
    max_index: int = 50
    base: int = 0
    offsets: Dict[str, int] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if self.resolution <= 0 or self.max_index < 1:
            raise TokenizerError(f"invalid bin spec resolution={self.resolution} max_index={self.max_index}")
        width = self.bins_per_dim
        offsets = {dim: self.base + i * width for i, dim in enumerate(DIMENSIONS)}
        object.__setattr__(self, "offsets", offsets)

    @property
    def bins_per_dim(self) -> int:
        return 2 * self.max_index + 1

    @property
    def stop_token(self) -> int:
        return self.base + len(DIMENSIONS) * self.bins_per_dim

    @property
    def size(self) -> int:
        """Ids owned by the spec, stop token included."""
        return len(DIMENSIONS) * self.bins_per_dim + 1

    def dim_range(self, dim: str) -> range:
        start = self.offsets[dim]
        return range(start, start + self.bins_per_dim)

    @property
    def limit(self) -> float:
        return self.max_index * self.resolution


def signed_index(value: float, spec: BinSpec) -> int:
    """Nearest bin, ties away from zero, clamped to +-max_index."""
    magnitude = math.floor(abs(value) / spec.resolution + 0.5 + _EPS)
    magnitude = min(magnitude, spec.max_index)
    return -magnitude if value < 0 else magnitude


def bin_token(dim: str, index: int, spec: BinSpec) -> int:
    return spec.offsets[dim] + index + spec.max_index


def bin_name(token: int, spec: BinSpec) -> str:
    """Readable name, e.g. ``dx_pos_bin_02``, ``dy_neg_bin_23`` or ``stop``."""
    if token == spec.stop_token:
        return "stop"
    for dim in DIMENSIONS:
        if token in spec.dim_range(dim):
            index = token - spec.offsets[dim] - spec.max_index
            sign = "neg" if index < 0 else "pos"
            return f"{dim}_{sign}_bin_{abs(index):02d}"
    raise TokenizerError(f"token {token} is not an action token")


def action_to_bins(action: Action, spec: BinSpec) -> Union[Tuple[int, int, int], Tuple[int]]:
    if action.is_stop:
        return (spec.stop_token,)
    values = (action.dx, action.dy, action.dyaw)
    return tuple(bin_token(dim, signed_index(v, spec), spec) for dim, v in zip(DIMENSIONS, values))  # type: ignore[return-value]


def bins_to_action(tokens: Sequence[int], spec: BinSpec) -> Action:
    """Bin-centre action for three (dx, dy, dyaw) tokens, or the stop action for the stop token."""
    tokens = [int(t) for t in tokens]
    if len(tokens) == 1 and tokens[0] == spec.stop_token:
        return Action.stop()
    if len(tokens) != len(DIMENSIONS):
        raise TokenizerError(f"expected 3 action tokens or the stop token, got {tokens}")
    values = []
    for dim, token in zip(DIMENSIONS, tokens):
        if token not in spec.dim_range(dim):
            raise TokenizerError(f"token {token} is outside the {dim} range {spec.dim_range(dim)}")
        values.append((token - spec.offsets[dim] - spec.max_index) * spec.resolution)
    return Action(dx=values[0], dy=values[1], dyaw=values[2])
