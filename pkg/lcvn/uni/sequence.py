"""
Training samples for the unified-token model.

Prompt layout, in order:

    <bos> <task> <instr> words... <start_obs> o_0 <cur_obs> o_{t-k+1..t} <cur_action> a_{t-1} <pred_action>

followed by the response

    <move> b_dx b_dy b_dyaw <pred_obs> o_{t+1}      (moving step)
    <stop>                                          (final step)

History frames before the start repeat o_0; the action before step 0 is the
zero action. ``<move>`` and ``<pred_obs>`` are the generated text targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from lcvn.config import UniConfig
from lcvn.datagen.instructions import MAX_TOKENS
from lcvn.datagen.trajectory import Trajectory
from lcvn.datagen.world import Action
from lcvn.errors import BudgetError, ShapeError
from lcvn.tokenizers import vq
from lcvn.tokenizers.bins import action_to_bins
from lcvn.tokenizers.space import TokenSpace
from lcvn.tokenizers.vq import Codebook

SCAFFOLD = ("<bos>", "<task>", "<instr>", "<start_obs>", "<cur_obs>", "<cur_action>", "<pred_action>")
ACTION_TOKENS = 3


@dataclass(frozen=True)
class UniSequence:
    tokens: np.ndarray  # (T,) int64
    modalities: Tuple[str, ...]
    action_targets: Tuple[int, ...]  # positions whose token is an action target (3 bins, or 1 stop)
    obs_targets: Tuple[int, ...]  # positions of the m predicted visual tokens
    text_targets: Tuple[int, ...]  # positions of <move> / <pred_obs>
    next_patches: Optional[np.ndarray] = None  # (m, D) pooled patches of o_{t+1}; None on the stop step

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def prompt_length(self) -> int:
        """Number of tokens before the first generated token."""
        return min(self.action_targets + self.text_targets)

    @property
    def is_stop(self) -> bool:
        return len(self.action_targets) == 1


def budget_components(cfg: UniConfig, m: int) -> List[Tuple[str, int]]:
    """Worst-case token count per component, in sequence order."""
    return [
        ("scaffold", len(SCAFFOLD)),
        ("instruction", MAX_TOKENS),
        ("start observation", m),
        ("history", cfg.context_size * m),
        ("current action", ACTION_TOKENS),
        ("response", 1 + ACTION_TOKENS + 1 + m),
    ]


def check_budget(cfg: UniConfig, m: int) -> int:
    """Total worst-case sequence length; BudgetError naming the component that crosses the budget."""
    total = 0
    for name, count in budget_components(cfg, m):
        total += count
        if total > cfg.budget:
            raise BudgetError(
                f"{name} overflows the token budget: {total} > {cfg.budget} "
                f"(k={cfg.context_size}, m={m} visual tokens per frame)"
            )
    return total


def encode_frames(traj: Trajectory, codebook: Codebook) -> np.ndarray:
    """(n + 1, m) visual codes, one row per observation."""
    return np.stack([vq.vq_encode(obs, codebook) for obs in traj.observations])


def _action_tokens(action: Action, space: TokenSpace) -> Tuple[int, ...]:
    return action_to_bins(action, space.bins)


def prompt_tokens(
    space: TokenSpace,
    instruction: Sequence[int],
    start_codes: Sequence[int],
    history_codes: Sequence[Sequence[int]],
    prev_action: Action,
    k: int,
) -> List[int]:
    """Prompt ending in <pred_action>. ``instruction`` holds vocabulary indices, codes are visual indices."""
    if not history_codes:
        raise ShapeError("prompt needs at least one history frame")
    frames = list(history_codes)[-k:]
    frames = [frames[0]] * (k - len(frames)) + frames
    c = space.control
    out = [c("<bos>"), c("<task>"), c("<instr>")]
    out += space.words.from_instruction_ids(instruction)
    out.append(c("<start_obs>"))
    out += [space.visual_token(code) for code in start_codes]
    out.append(c("<cur_obs>"))
    for frame in frames:
        out += [space.visual_token(code) for code in frame]
    out.append(c("<cur_action>"))
    move = Action(0.0, 0.0, 0.0) if prev_action.is_stop else prev_action
    out += list(_action_tokens(move, space))
    out.append(c("<pred_action>"))
    return out


def build_sample(
    traj: Trajectory,
    t: int,
    style: str,
    space: TokenSpace,
    codebook: Codebook,
    cfg: UniConfig,
    frame_codes: Optional[np.ndarray] = None,
) -> UniSequence:
    """Sample for step ``t`` (0 <= t < n): predict a_t and, unless a_t is stop, o_{t+1}."""
    if not 0 <= t < traj.n:
        raise ShapeError(f"step {t} outside trajectory with {traj.n} actions")
    m = codebook.tokens_per_frame
    check_budget(cfg, m)
    if frame_codes is None:
        frame_codes = encode_frames(traj, codebook)
    history = [frame_codes[max(j, 0)] for j in range(t - cfg.context_size + 1, t + 1)]
    prev = traj.actions[t - 1] if t > 0 else Action(0.0, 0.0, 0.0)
    instruction = traj.instructions[style].tokens if cfg.use_language else ()
    tokens = prompt_tokens(space, instruction, frame_codes[0], history, prev, cfg.context_size)

    action = traj.actions[t]
    c = space.control
    text: List[int] = []
    acts: List[int] = []
    obs: List[int] = []
    patches = None
    if action.is_stop:
        acts.append(len(tokens))
        tokens.append(space.stop_token)
    else:
        text.append(len(tokens))
        tokens.append(c("<move>"))
        for tok in _action_tokens(action, space):
            acts.append(len(tokens))
            tokens.append(tok)
        text.append(len(tokens))
        tokens.append(c("<pred_obs>"))
        for code in frame_codes[t + 1]:
            obs.append(len(tokens))
            tokens.append(space.visual_token(code))
        patches = vq.patchify(traj.observations[t + 1], codebook.pool, codebook.patch, codebook.image_size)

    if len(tokens) > cfg.budget:
        raise BudgetError(f"sequence of {len(tokens)} tokens exceeds budget {cfg.budget}")
    arr = np.asarray(tokens, dtype=np.int64)
    return UniSequence(
        tokens=arr,
        modalities=tuple(space.modality(int(tok)) for tok in arr),
        action_targets=tuple(acts),
        obs_targets=tuple(obs),
        text_targets=tuple(text),
        next_patches=patches,
    )

