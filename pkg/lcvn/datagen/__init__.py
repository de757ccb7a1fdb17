"""Synthetic worlds, trajectories, egocentric observations and instructions."""

from lcvn.datagen.dataset import (
    Dataset,
    DatasetManifest,
    build_dataset,
    read_dataset,
    read_trajectories,
    write_dataset,
    write_trajectories,
)
from lcvn.datagen.instructions import STYLES, Instruction, generate_instruction
from lcvn.datagen.render import render_observation
from lcvn.datagen.trajectory import Trajectory, sample_trajectory
from lcvn.datagen.world import Action, Landmark, Pose, WorldLayout, generate_layout, integrate_actions

__all__ = [
    "Action",
    "Dataset",
    "DatasetManifest",
    "Instruction",
    "Landmark",
    "Pose",
    "STYLES",
    "Trajectory",
    "WorldLayout",
    "build_dataset",
    "generate_instruction",
    "generate_layout",
    "integrate_actions",
    "read_dataset",
    "read_trajectories",
    "render_observation",
    "sample_trajectory",
    "write_dataset",
    "write_trajectories",
]
