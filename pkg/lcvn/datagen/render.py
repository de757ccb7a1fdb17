"""
Egocentric rasterizer for the synthetic worlds.

Pinhole camera at the agent pose looking along its yaw with a 90 degree
horizontal field of view. Boundary walls are ray-cast per column; landmarks
are drawn as colour disks on the horizon, far to near.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Tuple

import numpy as np

from lcvn.datagen.vocabulary import PALETTE
from lcvn.datagen.world import Pose, WorldLayout
from lcvn.errors import GenerationError

FIELD_OF_VIEW = math.pi / 2.0
MAX_VIEW_DISTANCE = 8.0
MIN_VIEW_DEPTH = 0.1
LANDMARK_RADIUS = 0.3
WALL_HALF_HEIGHT = 0.5

SKY = np.array([0.55, 0.75, 0.95], dtype=np.float32)
FLOOR = np.array([0.35, 0.30, 0.25], dtype=np.float32)
# shade per wall: south, east, north, west
WALL_SHADES = np.array([0.45, 0.55, 0.65, 0.75], dtype=np.float32)


def focal_length(width: int) -> float:
    return (width / 2.0) / math.tan(FIELD_OF_VIEW / 2.0)


@lru_cache(maxsize=8)
def _column_bearings(width: int) -> np.ndarray:
    """Bearing (positive = left) of each pixel column's ray."""
    cols = np.arange(width, dtype=np.float64)
    return np.arctan(((width - 1) / 2.0 - cols) / focal_length(width))


def _cast_walls(layout: WorldLayout, pose: Pose, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Perpendicular distance and wall index hit by each column ray."""
    w, h = layout.bounds
    bearings = _column_bearings(width)
    angles = pose.yaw + bearings
    cx, cy = np.cos(angles), np.sin(angles)
    with np.errstate(divide="ignore", invalid="ignore"):
        candidates = np.stack(
            [
                np.where(cy < 0, (0.0 - pose.y) / cy, np.inf),  # south, y = 0
                np.where(cx > 0, (w - pose.x) / cx, np.inf),  # east, x = w
                np.where(cy > 0, (h - pose.y) / cy, np.inf),  # north, y = h
                np.where(cx < 0, (0.0 - pose.x) / cx, np.inf),  # west, x = 0
            ]
        )
    hit = np.argmin(candidates, axis=0)
    dist = candidates[hit, np.arange(width)]
    return np.maximum(dist * np.cos(bearings), 1e-6), hit


def render_observation(layout: WorldLayout, pose: Pose, image_size: int = 32) -> np.ndarray:
    """Render an ``image_size`` x ``image_size`` x 3 float32 image in [0, 1]."""
    if not layout.contains(pose.x, pose.y):
        raise GenerationError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is outside bounds {layout.bounds}")

    size = int(image_size)
    f = focal_length(size)
    horizon = (size - 1) / 2.0
    rows = np.arange(size, dtype=np.float64)[:, None]
    cols = np.arange(size, dtype=np.float64)[None, :]

    image = np.empty((size, size, 3), dtype=np.float32)
    image[:] = np.where((rows < horizon)[..., None], SKY, FLOOR)

    depth, hit = _cast_walls(layout, pose, size)
    half = WALL_HALF_HEIGHT * f / depth
    wall_mask = np.abs(rows - horizon) <= half[None, :]
    shade = WALL_SHADES[hit][None, :].repeat(size, axis=0)
    image[wall_mask] = shade[wall_mask][:, None]

    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    visible = []
    for lm in layout.landmarks:
        dx, dy = lm.position[0] - pose.x, lm.position[1] - pose.y
        forward = c * dx + s * dy
        left = -s * dx + c * dy
        dist = math.hypot(dx, dy)
        if forward <= MIN_VIEW_DEPTH or dist > MAX_VIEW_DISTANCE:
            continue
        bearing = math.atan2(left, forward)
        if abs(bearing) > FIELD_OF_VIEW / 2.0 + math.atan(LANDMARK_RADIUS / dist):
            continue
        visible.append((dist, lm, bearing))

    for dist, lm, bearing in sorted(visible, key=lambda v: -v[0]):
        col = horizon - f * math.tan(bearing)
        radius = max(LANDMARK_RADIUS * f / dist, 0.5)
        disk = (cols - col) ** 2 + (rows - horizon) ** 2 <= radius**2
        image[disk] = np.asarray(PALETTE[lm.color_index], dtype=np.float32)

    return np.clip(image, 0.0, 1.0)
