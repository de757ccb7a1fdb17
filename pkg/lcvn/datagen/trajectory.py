from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from lcvn.datagen.instructions import STYLES, Instruction, generate_instruction
from lcvn.datagen.render import render_observation
from lcvn.datagen.world import Action, Landmark, Pose, WorldLayout, integrate_actions
from lcvn.errors import GenerationError

logger = logging.getLogger(__name__)

MAX_RETRIES = 10
MIN_LENGTH = 3
BACKWARD_TOLERANCE = -0.01
WALL_CLEARANCE = 0.3
START_MARGIN = 1.0
MIN_START_GOAL_DISTANCE = 3.0
STOP_RADIUS = 0.9
WAYPOINT_RADIUS = 0.5
CREEP_STEP = 0.05
MAX_TURN = 0.5


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode: n actions (last is stop), n + 1 poses and observations."""

    layout_id: int
    trajectory_id: str
    seed: int
    poses: Tuple[Pose, ...]
    actions: Tuple[Action, ...]
    observations: np.ndarray
    instructions: Dict[str, Instruction] = field(default_factory=dict)
    average_step_size: float = 1.0
    goal: Optional[Landmark] = None
    en_route: Optional[Landmark] = None
    scene: Tuple[str, ...] = ()
    provenance: str = "generated"

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def n(self) -> int:
        return len(self.actions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.layout_id == other.layout_id
            and self.trajectory_id == other.trajectory_id
            and self.seed == other.seed
            and self.poses == other.poses
            and self.actions == other.actions
            and self.observations.dtype == other.observations.dtype
            and np.array_equal(self.observations, other.observations)
            and self.instructions == other.instructions
            and self.average_step_size == other.average_step_size
            and self.goal == other.goal
            and self.en_route == other.en_route
            and self.scene == other.scene
            and self.provenance == other.provenance
        )

    __hash__ = None  # type: ignore[assignment]

    def action_array(self) -> np.ndarray:
        return np.stack([a.as_array() for a in self.actions])

    def stop_flags(self) -> np.ndarray:
        return np.array([a.is_stop for a in self.actions], dtype=bool)

    def normalized_actions(self) -> np.ndarray:
        """(n, 3) actions with planar displacements divided by the average step size."""
        arr = self.action_array()
        arr[:, :2] /= self.average_step_size
        return arr

    def with_step_size(self, average_step_size: float) -> "Trajectory":
        return replace(self, average_step_size=float(average_step_size))


def mean_step_size(trajectories: List[Trajectory]) -> float:
    norms = [a.planar_norm for t in trajectories for a in t.actions if not a.is_stop]
    if not norms:
        raise GenerationError("cannot compute an average step size without movement actions")
    return float(np.mean(norms))


def _agent_frame(pose: Pose, target: Tuple[float, float]) -> Tuple[float, float]:
    dx, dy = target[0] - pose.x, target[1] - pose.y
    return math.atan2(dy, dx) - pose.yaw, math.hypot(dx, dy)


def _steer(pose: Pose, target: Tuple[float, float], step: float, remaining: float, rng: np.random.Generator) -> Action:
    bearing, _ = _agent_frame(pose, target)
    bearing = math.remainder(bearing, 2.0 * math.pi)
    if abs(bearing) < MAX_TURN:
        dx = step
    else:
        dx = max(CREEP_STEP, step * math.cos(bearing))
    dx = max(0.0, min(dx, remaining))
    dy = float(np.clip(0.3 * step * math.sin(bearing), -0.1, 0.1)) + float(rng.uniform(-0.02, 0.02))
    dyaw = float(np.clip(bearing, -MAX_TURN, MAX_TURN)) + float(rng.uniform(-0.02, 0.02))
    return Action.clamped(round(dx, 6), round(dy, 6), round(dyaw, 6))


def check_forward_moves(actions: List[Action], trajectory_id: str) -> None:
    """Expert actions never move backward beyond ``BACKWARD_TOLERANCE``."""
    for t, a in enumerate(actions):
        if not a.is_stop and a.dx < BACKWARD_TOLERANCE:
            raise GenerationError(f"trajectory {trajectory_id} moves backward at step {t} (dx={a.dx:.4f})")


def _attempt(
    layout: WorldLayout, rng: np.random.Generator, max_len: int, step_range: Tuple[float, float]
) -> Optional[Tuple[List[Pose], List[Action], Landmark, Optional[Landmark]]]:
    width, height = layout.bounds
    goal = layout.landmarks[int(rng.integers(0, len(layout.landmarks)))]
    others = [lm for lm in layout.landmarks if lm.id != goal.id]
    en_route = others[int(rng.integers(0, len(others)))] if others and rng.random() < 0.5 else None

    mean_step = 0.5 * (step_range[0] + step_range[1])
    max_goal_distance = STOP_RADIUS + 0.6 * (max_len - 1) * mean_step
    min_goal_distance = min(MIN_START_GOAL_DISTANCE, 0.5 * max_goal_distance)
    for _ in range(100):
        start_xy = (
            float(rng.uniform(START_MARGIN, width - START_MARGIN)),
            float(rng.uniform(START_MARGIN, height - START_MARGIN)),
        )
        goal_distance = math.dist(start_xy, goal.position)
        far_from_goal = min_goal_distance <= goal_distance <= max_goal_distance
        clear = all(math.dist(start_xy, lm.position) > STOP_RADIUS for lm in layout.landmarks)
        if far_from_goal and clear:
            break
    else:
        return None
    pose = Pose(start_xy[0], start_xy[1], float(rng.uniform(-math.pi, math.pi)))

    waypoints: List[Tuple[Tuple[float, float], float]] = []
    if en_route is not None:
        # pass beside the en-route landmark on the side facing the start
        ex, ey = en_route.position
        d = math.dist(start_xy, en_route.position)
        if d > STOP_RADIUS + WAYPOINT_RADIUS:
            ux, uy = (start_xy[0] - ex) / d, (start_xy[1] - ey) / d
            waypoints.append(((ex + STOP_RADIUS * ux, ey + STOP_RADIUS * uy), WAYPOINT_RADIUS))
        else:
            en_route = None
    waypoints.append((goal.position, STOP_RADIUS))

    poses = [pose]
    actions: List[Action] = []
    while len(actions) < max_len - 1:
        target, radius = waypoints[0]
        _, dist = _agent_frame(pose, target)
        if dist < radius:
            waypoints.pop(0)
            if not waypoints:
                break
            continue
        step = float(rng.uniform(*step_range))
        action = _steer(pose, target, step, dist - radius + 0.05, rng)
        pose = pose.compose(action)
        if not (WALL_CLEARANCE <= pose.x <= width - WALL_CLEARANCE and WALL_CLEARANCE <= pose.y <= height - WALL_CLEARANCE):
            return None
        poses.append(pose)
        actions.append(action)
    if waypoints and math.dist(pose.position, goal.position) >= STOP_RADIUS:
        return None
    actions.append(Action.stop())
    poses.append(pose)
    if len(actions) < MIN_LENGTH:
        return None
    return poses, actions, goal, en_route


def sample_trajectory(
    layout: WorldLayout,
    seed: int,
    max_len: int,
    image_size: int = 32,
    trajectory_id: Optional[str] = None,
    step_range: Tuple[float, float] = (0.2, 0.4),
) -> Trajectory:
    """
    Waypoint trajectory from a random start toward a goal landmark, ending in stop.

    Attempts that leave the walls, end too short or do not reach the goal within
    ``max_len`` actions are retried with the next internal seed.
    """
    if max_len < MIN_LENGTH:
        raise GenerationError(f"max_len must be >= {MIN_LENGTH}, got {max_len}")

    rng = np.random.default_rng([int(layout.seed), int(seed)])
    for attempt in range(MAX_RETRIES):
        result = _attempt(layout, rng, max_len, step_range)
        if result is not None:
            break
        logger.debug("trajectory attempt failed", extra={"layout_id": layout.layout_id, "seed": seed, "attempt": attempt})
    else:
        raise GenerationError(
            f"no reachable goal within max_len={max_len} after {MAX_RETRIES} attempts "
            f"(layout {layout.layout_id}, seed {seed})"
        )

    poses, actions, goal, en_route = result
    trajectory_id = trajectory_id or f"L{layout.layout_id}-T{seed}"
    check_forward_moves(actions, trajectory_id)
    # re-integrate so stored poses are the exact composition of stored actions
    poses = integrate_actions(poses[0], actions)
    observations = np.stack([render_observation(layout, p, image_size) for p in poses]).astype(np.float32)
    moving = [a.planar_norm for a in actions if not a.is_stop]
    traj = Trajectory(
        layout_id=layout.layout_id,
        trajectory_id=trajectory_id,
        seed=int(seed),
        poses=tuple(poses),
        actions=tuple(actions),
        observations=observations,
        average_step_size=float(np.mean(moving)),
        goal=goal,
        en_route=en_route,
        scene=layout.scene,
    )
    return replace(traj, instructions={style: generate_instruction(traj, style) for style in STYLES})

