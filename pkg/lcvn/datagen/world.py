from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from lcvn.datagen.vocabulary import (
    SCENE_ADJECTIVES,
    SCENE_NOUNS,
    SEEN_COLORS,
    SEEN_NOUNS,
    UNSEEN_COLORS,
    UNSEEN_NOUNS,
)
from lcvn.errors import GenerationError

ACTION_LIMIT = 0.5
LANDMARK_MARGIN = 1.0
MIN_LANDMARK_SEPARATION = 1.5

Segment = Tuple[Tuple[float, float], Tuple[float, float]]


def wrap_angle(angle: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    yaw: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def compose(self, action: "Action") -> "Pose":
        """SE(2) composition: agent-frame (dx, dy) rotated by the current yaw, then dyaw."""
        if action.is_stop:
            return self
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return Pose(
            x=self.x + action.dx * c - action.dy * s,
            y=self.y + action.dx * s + action.dy * c,
            yaw=self.yaw + action.dyaw,
        )

    def relative_to(self, other: "Pose") -> "Pose":
        """The pose of ``self`` expressed in the frame of ``other`` (other^-1 * self)."""
        c, s = math.cos(other.yaw), math.sin(other.yaw)
        dx, dy = self.x - other.x, self.y - other.y
        return Pose(x=c * dx + s * dy, y=-s * dx + c * dy, yaw=self.yaw - other.yaw)


@dataclass(frozen=True)
class Action:
    """Agent-frame displacement: dx along facing, dy to the left, dyaw counter-clockwise."""

    dx: float = 0.0
    dy: float = 0.0
    dyaw: float = 0.0
    is_stop: bool = False

    def __post_init__(self) -> None:
        if self.is_stop and (self.dx, self.dy, self.dyaw) != (0.0, 0.0, 0.0):
            raise GenerationError("a stop action must have zero displacement")

    @classmethod
    def stop(cls) -> "Action":
        return cls(is_stop=True)

    @classmethod
    def clamped(cls, dx: float, dy: float, dyaw: float) -> "Action":
        lim = ACTION_LIMIT
        return cls(
            dx=float(np.clip(dx, -lim, lim)),
            dy=float(np.clip(dy, -lim, lim)),
            dyaw=float(np.clip(dyaw, -lim, lim)),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dyaw], dtype=np.float64)

    @property
    def planar_norm(self) -> float:
        return math.hypot(self.dx, self.dy)


@dataclass(frozen=True)
class Landmark:
    id: int
    position: Tuple[float, float]
    color_index: int
    name: str


@dataclass(frozen=True)
class WorldLayout:
    seed: int
    bounds: Tuple[float, float]
    landmarks: Tuple[Landmark, ...]
    walls: Tuple[Segment, ...]
    scene: Tuple[str, ...] = field(default=())
    reserved: bool = False

    @property
    def layout_id(self) -> int:
        return self.seed

    def contains(self, x: float, y: float) -> bool:
        w, h = self.bounds
        return 0.0 <= x <= w and 0.0 <= y <= h

    def landmark(self, landmark_id: int) -> Landmark:
        for lm in self.landmarks:
            if lm.id == landmark_id:
                return lm
        raise GenerationError(f"layout {self.seed} has no landmark {landmark_id}")


def boundary_walls(width: float, height: float) -> Tuple[Segment, ...]:
    corners = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)]
    return tuple((corners[i], corners[(i + 1) % 4]) for i in range(4))


def generate_layout(
    seed: int,
    n_landmarks: int,
    bounds: Tuple[float, float] = (10.0, 10.0),
    reserved: bool = False,
) -> WorldLayout:
    """
    Sample a rectangular world with named, coloured landmarks.

    ``reserved`` layouts draw names and colours from the subset kept out of
    training (unseen environments). Deterministic in ``seed``.
    """
    names_pool = UNSEEN_NOUNS if reserved else SEEN_NOUNS
    colors_pool = UNSEEN_COLORS if reserved else SEEN_COLORS
    if n_landmarks < 2:
        raise GenerationError(f"n_landmarks must be >= 2, got {n_landmarks}")
    if n_landmarks > len(names_pool):
        raise GenerationError(
            f"n_landmarks={n_landmarks} exceeds the {len(names_pool)} available landmark names"
        )

    rng = np.random.default_rng(seed)
    width, height = float(bounds[0]), float(bounds[1])
    names = rng.choice(len(names_pool), size=n_landmarks, replace=False)
    positions: List[Tuple[float, float]] = []
    attempts = 0
    while len(positions) < n_landmarks:
        attempts += 1
        if attempts > 10_000:
            raise GenerationError(f"cannot place {n_landmarks} landmarks in bounds {bounds}")
        x = float(rng.uniform(LANDMARK_MARGIN, width - LANDMARK_MARGIN))
        y = float(rng.uniform(LANDMARK_MARGIN, height - LANDMARK_MARGIN))
        if all(math.hypot(x - px, y - py) >= MIN_LANDMARK_SEPARATION for px, py in positions):
            positions.append((x, y))
    colors = rng.integers(0, len(colors_pool), size=n_landmarks)

    landmarks = tuple(
        Landmark(id=i, position=positions[i], color_index=int(colors_pool[colors[i]]), name=names_pool[names[i]])
        for i in range(n_landmarks)
    )
    adjectives = rng.choice(len(SCENE_ADJECTIVES), size=2, replace=False)
    scene = (
        SCENE_ADJECTIVES[adjectives[0]],
        SCENE_ADJECTIVES[adjectives[1]],
        SCENE_NOUNS[int(rng.integers(0, len(SCENE_NOUNS)))],
    )
    return WorldLayout(
        seed=seed,
        bounds=(width, height),
        landmarks=landmarks,
        walls=boundary_walls(width, height),
        scene=scene,
        reserved=reserved,
    )


def integrate_actions(start: Pose, actions: Iterable[Action]) -> List[Pose]:
    """Poses visited by executing ``actions`` from ``start`` (stop actions are identity)."""
    poses = [start]
    for action in actions:
        poses.append(poses[-1].compose(action))
    return poses


def compose_actions(actions: Sequence[Action]) -> Action:
    """Single agent-frame action equivalent to executing ``actions`` in order."""
    end = integrate_actions(Pose(0.0, 0.0, 0.0), actions)[-1]
    if all(a.is_stop for a in actions):
        return Action.stop()
    return Action(dx=end.x, dy=end.y, dyaw=end.yaw)
