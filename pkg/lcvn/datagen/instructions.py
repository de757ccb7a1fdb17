"""Template instructions in three styles: concise, intricate and landmark."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

from lcvn.config import STYLES
from lcvn.datagen.vocabulary import COLORS, VOCABULARY
from lcvn.datagen.world import Action, Landmark
from lcvn.errors import GenerationError

if TYPE_CHECKING:
    from lcvn.datagen.trajectory import Trajectory

MAX_TOKENS = 32
MAX_SEGMENTS = 4
TURN_THRESHOLD = 0.15
SLIGHT_TURN = 0.6

_WORD_IDS = {word: i for i, word in enumerate(VOCABULARY)}


@dataclass(frozen=True)
class Instruction:
    style: str
    tokens: Tuple[int, ...]
    text: str

    def __post_init__(self) -> None:
        if self.style not in STYLES:
            raise GenerationError(f"unknown instruction style {self.style!r}")
        if len(self.tokens) > MAX_TOKENS:
            raise GenerationError(f"instruction has {len(self.tokens)} tokens, limit is {MAX_TOKENS}")
        if any(not 0 <= t < len(VOCABULARY) for t in self.tokens):
            raise GenerationError(f"instruction token outside vocabulary: {self.tokens}")

    @classmethod
    def from_words(cls, style: str, words: Sequence[str]) -> "Instruction":
        missing = [w for w in words if w not in _WORD_IDS]
        if missing:
            raise GenerationError(f"word {missing[0]!r} is not in the vocabulary")
        return cls(style=style, tokens=tuple(_WORD_IDS[w] for w in words), text=" ".join(words))

    @property
    def words(self) -> List[str]:
        return [VOCABULARY[t] for t in self.tokens]


def _direction(action: Action) -> str:
    if action.dyaw > TURN_THRESHOLD:
        return "left"
    if action.dyaw < -TURN_THRESHOLD:
        return "right"
    return "straight"


def turn_segments(actions: Sequence[Action]) -> List[Tuple[str, float]]:
    """Runs of equal direction as (direction, accumulated |dyaw|), at most MAX_SEGMENTS."""
    moving = [a for a in actions if not a.is_stop]
    segments = [
        (direction, sum(abs(a.dyaw) for a in group))
        for direction, group in ((d, list(g)) for d, g in groupby(moving, key=_direction))
    ]
    if not segments:
        return [("straight", 0.0)]
    if len(segments) > MAX_SEGMENTS:
        segments = segments[: MAX_SEGMENTS - 1] + segments[-1:]
    return segments


def _phrase(direction: str, turned: float) -> List[str]:
    if direction == "straight":
        return ["walk", "straight"]
    if turned < SLIGHT_TURN:
        return ["turn", "slightly", direction]
    return ["turn", direction]


def _landmark_words(landmark: Landmark) -> List[str]:
    return ["the", COLORS[landmark.color_index], landmark.name]


def _body(segments: List[Tuple[str, float]], en_route: Optional[Landmark] = None) -> List[str]:
    words: List[str] = []
    for i, (direction, turned) in enumerate(segments):
        if i:
            words.append("then")
        words.extend(_phrase(direction, turned))
        if i == 0 and en_route is not None:
            words.extend(["past", *_landmark_words(en_route)])
    return words


def generate_instruction(traj: "Trajectory", style: str) -> Instruction:
    """Deterministic instruction for ``traj`` in ``style``."""
    segments = turn_segments(traj.actions)
    if style == "concise":
        words = _body(segments) + ["and", "stop"]
    elif style == "intricate":
        if len(traj.scene) < 2:
            raise GenerationError("intricate instructions need at least two scene attributes")
        words = ["on", "the", *traj.scene] + _body(segments) + ["and", "stop"]
    elif style == "landmark":
        if traj.goal is None:
            raise GenerationError(f"trajectory {traj.trajectory_id} has no goal landmark")
        words = _body(segments, traj.en_route) + ["and", "stop", "at", *_landmark_words(traj.goal)]
    else:
        raise GenerationError(f"unknown instruction style {style!r}")
    return Instruction.from_words(style, words)
