from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from lcvn.config import UniConfig
from lcvn.datagen.world import Action
from lcvn.tokenizers import vq
from lcvn.tokenizers.bins import action_to_bins, bins_to_action
from lcvn.tokenizers.space import TokenSpace
from lcvn.tokenizers.vq import Codebook
from lcvn.uni.model import UniTransformer
from lcvn.uni.sequence import prompt_tokens

logger = logging.getLogger(__name__)

Allowed = Union[range, Sequence[int]]


def _pick(logits: torch.Tensor, allowed: Allowed, temperature: float, generator: Optional[torch.Generator]) -> int:
    """Greedy (temperature 0) or sampled choice restricted to ``allowed`` ids."""
    masked = torch.full_like(logits, float("-inf"))
    idx = torch.as_tensor(list(allowed), dtype=torch.long)
    masked[idx] = logits[idx]
    if temperature <= 0.0:
        return int(torch.argmax(masked))
    probs = torch.softmax(masked / temperature, dim=-1)
    return int(torch.multinomial(probs, 1, generator=generator))


@torch.no_grad()
def uni_infer_step(
    model: UniTransformer,
    space: TokenSpace,
    prompt: Sequence[int],
    m: int,
    temperature: float = 0.0,
    generator: Optional[torch.Generator] = None,
) -> Tuple[Action, Optional[np.ndarray], List[int]]:
    """
    Continue ``prompt`` (ending in <pred_action>) with the response: the
    <move>/<stop> decision, three bins, <pred_obs> and m visual tokens. Every
    position is decoded inside its legal range. Returns the action, the
    predicted visual codes (None on stop) and the generated tokens.
    """
    model.eval()
    ranges = space.ranges()
    seq = list(prompt)
    generated: List[int] = []

    def emit(allowed: Allowed) -> int:
        logits = model(torch.tensor(seq, dtype=torch.long))[-1]
        tok = _pick(logits, allowed, temperature, generator)
        seq.append(tok)
        generated.append(tok)
        return tok

    decision = emit([space.control("<move>"), space.stop_token])
    if decision == space.stop_token:
        return Action.stop(), None, generated
    bins = [emit(ranges[dim]) for dim in ("dx", "dy", "dyaw")]
    emit([space.control("<pred_obs>")])
    codes = np.array([space.visual_code(emit(ranges["visual"])) for _ in range(m)], dtype=np.int64)
    return bins_to_action(bins, space.bins), codes, generated


@dataclass
class UniRollout:
    actions: List[Action]
    codes: List[np.ndarray]  # predicted visual codes, one (m,) row per moving step
    stopped: bool
    observations: List[np.ndarray] = field(default_factory=list)

    @property
    def moves(self) -> List[Action]:
        return [a for a in self.actions if not a.is_stop]


def uni_rollout(
    model: UniTransformer,
    space: TokenSpace,
    codebook: Codebook,
    start_obs: np.ndarray,
    instruction: Sequence[int],
    cfg: UniConfig,
    t_max: int,
    seed: int = 0,
    decode_observations: bool = False,
) -> UniRollout:
    """
    Open-loop rollout. The start observation is the only ground-truth frame
    read; later prompts are built from predicted visual codes.
    """
    generator = torch.Generator().manual_seed(seed)
    start = vq.vq_encode(start_obs, codebook)
    instr = list(instruction) if cfg.use_language else []
    history: List[np.ndarray] = [start]
    prev = Action(0.0, 0.0, 0.0)
    actions: List[Action] = []
    predicted: List[np.ndarray] = []
    stopped = False
    for _ in range(t_max):
        prompt = prompt_tokens(space, instr, start, history, prev, cfg.context_size)
        action, codes, _ = uni_infer_step(
            model, space, prompt, codebook.tokens_per_frame, cfg.temperature, generator
        )
        actions.append(action)
        if codes is None:
            stopped = True
            break
        predicted.append(codes)
        history = (history + [codes])[-cfg.context_size :]
        prev = action
    logger.debug("uni rollout finished", extra={"steps": len(actions), "stopped": stopped})
    observations = [vq.vq_decode(c, codebook) for c in predicted] if decode_observations else []
    return UniRollout(actions=actions, codes=predicted, stopped=stopped, observations=observations)


@torch.no_grad()
def uni_imagine(
    model: UniTransformer,
    space: TokenSpace,
    codebook: Codebook,
    start_obs: np.ndarray,
    instruction: Sequence[int],
    actions: Sequence[Action],
    cfg: UniConfig,
) -> List[np.ndarray]:
    """
    Predicted visual codes after each given action, with the action tokens
    forced and only the observation decoded. A stop action repeats the last frame.
    """
    model.eval()
    start = vq.vq_encode(start_obs, codebook)
    instr = list(instruction) if cfg.use_language else []
    visual = space.ranges()["visual"]
    history: List[np.ndarray] = [start]
    prev = Action(0.0, 0.0, 0.0)
    out: List[np.ndarray] = []
    for action in actions:
        if action.is_stop:
            out.append(history[-1])
            continue
        seq = prompt_tokens(space, instr, start, history, prev, cfg.context_size)
        seq += [space.control("<move>"), *action_to_bins(action, space.bins), space.control("<pred_obs>")]
        codes = []
        for _ in range(codebook.tokens_per_frame):
            tok = _pick(model(torch.tensor(seq, dtype=torch.long))[-1], visual, 0.0, None)
            seq.append(tok)
            codes.append(space.visual_code(tok))
        frame = np.array(codes, dtype=np.int64)
        out.append(frame)
        history = (history + [frame])[-cfg.context_size :]
        prev = action
    return out
