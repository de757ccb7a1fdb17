"""Navigation metrics over planar pose traces: success rate, ATE and per-step RPE."""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import numpy as np

from lcvn.datagen.world import Pose
from lcvn.errors import MetricError

PoseTrace = List[Pose]


def positions(trace: Sequence[Pose]) -> np.ndarray:
    return np.array([p.position for p in trace], dtype=np.float64).reshape(-1, 2)


def pad_trace(trace: Sequence[Pose], length: int) -> PoseTrace:
    """Extend with the final pose; the agent stays put after stopping."""
    if not trace:
        raise MetricError("cannot pad an empty pose trace")
    return list(trace) + [trace[-1]] * (length - len(trace))


def pad_pair(pred: Sequence[Pose], ref: Sequence[Pose]) -> Tuple[PoseTrace, PoseTrace]:
    n = max(len(pred), len(ref))
    return pad_trace(pred, n), pad_trace(ref, n)


def success_rate(finals: Sequence[Tuple[float, float]], goals: Sequence[Tuple[float, float]], step_sizes: Sequence[float] | float) -> float:
    """Fraction of episodes whose final position lies strictly closer to the goal than the step size."""
    if not finals:
        raise MetricError("success rate over an empty list of episodes")
    if isinstance(step_sizes, (int, float)):
        step_sizes = [float(step_sizes)] * len(finals)
    if not len(finals) == len(goals) == len(step_sizes):
        raise MetricError(f"mismatched lengths: {len(finals)} finals, {len(goals)} goals, {len(step_sizes)} step sizes")
    hits = [math.dist(f, g) < s for f, g, s in zip(finals, goals, step_sizes)]
    return float(np.mean(hits))


def umeyama_alignment(model: np.ndarray, data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotation and translation minimising |R @ model_i + t - data_i|^2 over (N, 2) point sets
    (closed form via SVD of the cross-covariance, reflection removed).
    """
    mu_m, mu_d = model.mean(axis=0), data.mean(axis=0)
    cov = (data - mu_d).T @ (model - mu_m)
    u, _, vh = np.linalg.svd(cov)
    s = np.eye(2)
    if np.linalg.det(u) * np.linalg.det(vh) < 0:
        s[1, 1] = -1.0
    rot = u @ s @ vh
    return rot, mu_d - rot @ mu_m


def _check_pair(pred: Sequence[Pose], ref: Sequence[Pose], min_len: int) -> None:
    if len(pred) != len(ref):
        raise MetricError(f"trace lengths differ: {len(pred)} vs {len(ref)}")
    if len(pred) < min_len:
        raise MetricError(f"need traces of at least {min_len} poses, got {len(pred)}")


def ate(pred: Sequence[Pose], ref: Sequence[Pose], align: bool = False) -> float:
    """RMS position error; ``align`` first fits a rigid transform of pred onto ref."""
    _check_pair(pred, ref, 1)
    p, r = positions(pred), positions(ref)
    if align and len(p) >= 2:
        rot, trans = umeyama_alignment(p, r)
        p = p @ rot.T + trans
    return float(np.sqrt(np.mean(np.sum((p - r) ** 2, axis=1))))


def rpe(pred: Sequence[Pose], ref: Sequence[Pose]) -> float:
    """RMS translational norm of ref_step^-1 * pred_step over consecutive pose pairs."""
    _check_pair(pred, ref, 2)
    errors = []
    for t in range(len(pred) - 1):
        pred_step = pred[t + 1].relative_to(pred[t])
        ref_step = ref[t + 1].relative_to(ref[t])
        err = pred_step.relative_to(ref_step)
        errors.append(err.x**2 + err.y**2)
    return float(math.sqrt(sum(errors) / len(errors)))
