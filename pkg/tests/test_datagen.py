import math

import numpy as np
import pytest

from lcvn.datagen.dataset import (
    build_dataset,
    check_splits,
    read_dataset,
    read_trajectories,
    write_dataset,
    write_trajectories,
)
from lcvn.datagen.instructions import MAX_TOKENS, Instruction
from lcvn.datagen.trajectory import check_forward_moves, sample_trajectory
from lcvn.datagen.world import Action, Pose, compose_actions, generate_layout, integrate_actions, wrap_angle
from lcvn.errors import DatasetError, GenerationError

# File: tests/test_datagen.py


@pytest.fixture(scope="module")
def layout():
    return generate_layout(7, n_landmarks=4)


def test_wrap_angle_range():
    for angle in (-7.0, -math.pi, 0.0, math.pi, 3 * math.pi, 10.0):
        wrapped = wrap_angle(angle)
        assert -math.pi < wrapped <= math.pi
        assert math.isclose(math.cos(wrapped), math.cos(angle), abs_tol=1e-9)


def test_stop_action_must_be_zero():
    with pytest.raises(GenerationError):
        Action(dx=0.1, is_stop=True)
    assert Pose(1.0, 2.0, 0.3).compose(Action.stop()) == Pose(1.0, 2.0, 0.3)


def test_compose_actions_matches_integration():
    actions = [Action(0.3, 0.0, 0.2), Action(0.2, 0.1, -0.1), Action(0.4, 0.0, 0.0)]
    start = Pose(1.0, 1.0, 0.5)
    end = integrate_actions(start, actions)[-1]
    via = start.compose(compose_actions(actions))
    assert math.isclose(end.x, via.x, abs_tol=1e-9)
    assert math.isclose(end.y, via.y, abs_tol=1e-9)
    assert math.isclose(end.yaw, via.yaw, abs_tol=1e-9)
    assert compose_actions([Action.stop()]).is_stop


def test_layout_deterministic_and_reserved(layout):
    assert generate_layout(7, n_landmarks=4) == layout
    reserved = generate_layout(7, n_landmarks=4, reserved=True)
    assert {lm.name for lm in reserved.landmarks}.isdisjoint({lm.name for lm in layout.landmarks})
    with pytest.raises(GenerationError):
        generate_layout(1, n_landmarks=1)


def test_sample_trajectory_is_deterministic(layout):
    a = sample_trajectory(layout, seed=3, max_len=24, image_size=16)
    b = sample_trajectory(layout, seed=3, max_len=24, image_size=16)
    assert a == b


def test_trajectory_shape_and_stop(layout):
    traj = sample_trajectory(layout, seed=5, max_len=24, image_size=16)
    assert traj.n <= 24
    assert len(traj.poses) == traj.n + 1
    assert traj.observations.shape == (traj.n + 1, 16, 16, 3)
    assert traj.observations.dtype == np.float32
    assert traj.actions[-1].is_stop
    assert not any(a.is_stop for a in traj.actions[:-1])
    assert all(a.dx >= -0.01 for a in traj.actions)
    assert list(traj.poses) == integrate_actions(traj.poses[0], traj.actions)


def test_every_style_has_an_instruction(layout):
    traj = sample_trajectory(layout, seed=11, max_len=24, image_size=16)
    assert set(traj.instructions) == {"concise", "intricate", "landmark"}
    for ins in traj.instructions.values():
        assert 0 < len(ins.tokens) <= MAX_TOKENS
        assert "stop" in ins.words
    assert traj.instructions["landmark"].words[-1] == traj.goal.name


def test_instruction_rejects_unknown_words():
    with pytest.raises(GenerationError):
        Instruction.from_words("concise", ["fly", "to", "the", "moon"])
    with pytest.raises(GenerationError):
        Instruction.from_words("poetic", ["walk", "straight"])


def test_max_len_too_small(layout):
    with pytest.raises(GenerationError):
        sample_trajectory(layout, seed=0, max_len=2)


def test_backward_moves_are_rejected():
    check_forward_moves([Action(0.3, 0.0, 0.1), Action(-0.005, 0.0, 0.0), Action.stop()], "ok")
    with pytest.raises(GenerationError, match="step 1"):
        check_forward_moves([Action(0.3, 0.0, 0.0), Action(-0.2, 0.0, 0.0), Action.stop()], "bad")


def test_dataset_splits_are_disjoint(tiny_dataset):
    m = tiny_dataset.manifest
    assert set(m.seen_layouts).isdisjoint(m.unseen_layouts)
    train_ids = {t.trajectory_id for t in tiny_dataset.split("train")}
    seen_ids = {t.trajectory_id for t in tiny_dataset.split("val_seen")}
    assert train_ids.isdisjoint(seen_ids)
    assert {t.layout_id for t in tiny_dataset.split("val_unseen")} <= set(m.unseen_layouts)
    check_splits(m)


def test_average_step_size_shared(tiny_dataset):
    step = tiny_dataset.average_step_size
    assert step > 0
    for trajs in tiny_dataset.splits.values():
        assert all(t.average_step_size == step for t in trajs)


def test_build_dataset_is_a_pure_function(tiny_config, tiny_dataset):
    again = build_dataset(tiny_config.datagen)
    for name, trajs in tiny_dataset.splits.items():
        assert again.split(name) == trajs


def test_unknown_split(tiny_dataset):
    with pytest.raises(DatasetError):
        tiny_dataset.split("holdout")


def test_write_then_read_dataset(tmp_path, tiny_dataset):
    manifest = write_dataset(tiny_dataset, tmp_path / "data")
    assert all(info.sha256 for info in manifest.splits.values())
    loaded = read_dataset(tmp_path / "data")
    for name, trajs in tiny_dataset.splits.items():
        assert loaded.split(name) == trajs
    assert set(loaded.layouts) == set(tiny_dataset.layouts)


def test_checksum_mismatch_detected(tmp_path, tiny_dataset):
    write_dataset(tiny_dataset, tmp_path / "data")
    path = tmp_path / "data" / "train.lcvnl"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "data", splits=["train"])


def test_write_trajectories_single_file(tmp_path, train_trajs):
    digest = write_trajectories(tmp_path / "x.lcvnl", train_trajs[:2], "train", provenance="imagined")
    assert len(digest) == 64
    assert read_trajectories(tmp_path / "x.lcvnl") == list(train_trajs[:2])


def test_read_missing_file(tmp_path):
    with pytest.raises(DatasetError):
        read_trajectories(tmp_path / "absent.lcvnl")
