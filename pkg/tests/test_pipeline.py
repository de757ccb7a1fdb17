import json
from dataclasses import replace

import numpy as np
import pytest

from lcvn.cli import EXIT_ERROR, EXIT_OK, EXIT_USAGE, main
from lcvn.config import load_run_config
from lcvn.datagen.dataset import read_trajectories
from lcvn.datagen.world import Action
from lcvn.errors import ConfigError, PrerequisiteError
from lcvn.infra.checkpoint import load_checkpoint, state_checksum
from lcvn.pipeline import (
    AblationSpec,
    RunContext,
    Variant,
    cmd_ablate,
    cmd_eval,
    cmd_generate,
    cmd_report,
    cmd_train,
    load_dataset,
    random_actions,
    score_plan,
    variant_config,
)
from lcvn.pipeline.evaluate import Plan
from lcvn.worldmodel.trainer import WorldModelTrainer

# File: tests/test_pipeline.py


def _context(root, overrides, *extra):
    cfg = load_run_config(None, [*overrides, "wm.space=pixel", f"output_dir={root}", *extra])
    return RunContext.open(cfg)


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, tiny_overrides):
    """A pixel-space run with every phase trained once and evaluated on val_seen."""
    ctx = _context(tmp_path_factory.mktemp("pipeline") / "run", tiny_overrides)
    cmd_generate(ctx, progress=False)
    for phase in ("wm", "ac", "uni"):
        cmd_train(ctx, phase)
    report = cmd_eval(ctx, split="val_seen", families=["wm_ac", "uni", "random"])
    return ctx, report


def test_load_dataset_needs_generate(tmp_path, tiny_overrides):
    ctx = _context(tmp_path / "run", tiny_overrides)
    with pytest.raises(PrerequisiteError):
        load_dataset(ctx, ["train"])


def test_generate_records_inputs(tmp_path, tiny_overrides):
    ctx = _context(tmp_path / "run", tiny_overrides)
    manifest = cmd_generate(ctx, progress=False)
    assert manifest.splits["train"].count == 6
    assert (ctx.data_dir / "manifest.json").is_file()
    assert set(ctx.manifest["inputs"]) == {f"data/{s}" for s in manifest.splits}
    stored = json.loads(ctx.store.get_bytes("manifest.json"))
    assert [c["command"] for c in stored["commands"]] == ["generate"]
    assert ctx.store.exists("config.yaml")


def test_train_rejects_unknown_phase(tmp_path, tiny_overrides):
    ctx = _context(tmp_path / "run", tiny_overrides)
    with pytest.raises(ConfigError):
        cmd_train(ctx, "vae")


def test_actor_critic_needs_world_model(tmp_path, tiny_overrides):
    ctx = _context(tmp_path / "run", tiny_overrides)
    cmd_generate(ctx, progress=False)
    with pytest.raises(PrerequisiteError, match="wm"):
        cmd_train(ctx, "ac")


class Interrupted(Exception):
    pass


def test_interrupted_training_resumes_to_same_weights(tmp_path, tiny_overrides, monkeypatch):
    straight = _context(tmp_path / "straight", tiny_overrides)
    cmd_generate(straight, progress=False)
    cmd_train(straight, "wm")
    expected = load_checkpoint(straight.checkpoint_path("wm"))

    resumed = _context(tmp_path / "resumed", tiny_overrides)
    cmd_generate(resumed, progress=False)
    real_step = WorldModelTrainer.step
    calls = []

    def failing_step(self):
        calls.append(1)
        if len(calls) == 3:
            raise Interrupted
        return real_step(self)

    monkeypatch.setattr(WorldModelTrainer, "step", failing_step)
    with pytest.raises(Interrupted):
        cmd_train(resumed, "wm")
    partial = load_checkpoint(resumed.checkpoint_path("wm"))
    assert partial["extra"]["trainer"]["step"] == 2
    assert not partial["extra"]["complete"]

    monkeypatch.setattr(WorldModelTrainer, "step", real_step)
    cmd_train(_context(tmp_path / "resumed", tiny_overrides), "wm")
    final = load_checkpoint(resumed.checkpoint_path("wm"))
    assert final["extra"]["complete"]
    assert state_checksum(final["states"]["wm"]) == state_checksum(expected["states"]["wm"])


def test_eval_writes_report_and_traces(trained_run):
    ctx, report = trained_run
    eval_dir = ctx.store.path("eval")
    assert (eval_dir / "report_val_seen.json").is_file()
    assert (eval_dir / "report_val_seen.txt").is_file()
    assert {r.family for r in report.records} == {"wm_ac", "uni", "random"}
    assert report.counts["trajectories"] == 2
    # pixel space has no VAE, so the DreamSim embedders are missing
    assert report.counts["dreamsim_unavailable"] == 1
    for family in ("wm_ac", "uni"):
        traces = read_trajectories(eval_dir / f"val_seen_{family}_imagined.lcvnl")
        assert len(traces) == 2
        assert all(t.actions[-1].is_stop for t in traces)
        assert all(len(t.observations) == t.n + 1 for t in traces)
    assert not (eval_dir / "val_seen_random_imagined.lcvnl").exists()
    assert list((eval_dir / "plots").glob("*.png"))
    commands = [c["command"] for c in ctx.manifest["commands"]]
    assert commands == ["generate", "train-wm", "train-ac", "train-uni", "eval"]
    assert set(ctx.manifest["checkpoints"]) >= {"wm", "ac", "tokenizers", "uni"}


def test_eval_imagination_metrics(trained_run):
    _, report = trained_run
    for record in report.records:
        if record.family == "random":
            assert record.ssim is None and record.ssim_curve == []
            continue
        assert -1.0 <= record.ssim <= 1.0
        if record.ssim_curve:
            assert len(record.ssim_curve) == report.horizon_n
            assert record.ssim_at_n == record.ssim_curve[-1]


def test_eval_rejects_unknown_family(trained_run):
    ctx, _ = trained_run
    with pytest.raises(ConfigError):
        cmd_eval(ctx, families=["oracle"])


def test_report_renders_tables(trained_run):
    ctx, _ = trained_run
    text = cmd_report(ctx, split="val_seen")
    assert text.startswith("Split: val_seen")
    assert "Navigation" in text and "Imagination" in text
    assert ctx.store.path("report.txt").read_text().rstrip() == text


def test_report_needs_eval(tmp_path, tiny_overrides):
    ctx = _context(tmp_path / "run", tiny_overrides)
    with pytest.raises(PrerequisiteError):
        cmd_report(ctx, split="test")


def test_random_actions_bounds(rng):
    for _ in range(20):
        actions = random_actions(rng, t_max=5, stop_prob=0.3, step_size=0.3)
        assert 1 <= len(actions) <= 5
        assert not actions[0].is_stop
        assert all(not a.is_stop for a in actions[:-1])
        assert all(0.0 <= a.dx <= 0.6 for a in actions if not a.is_stop)


def test_score_plan_replaying_reference_succeeds(train_trajs):
    traj = train_trajs[0]
    plan = Plan(list(traj.actions), [], True, 0.01)
    record = score_plan(traj, "oracle", "concise", "train", plan, align_ate=False)
    assert record.success
    assert record.final_distance == pytest.approx(0.0, abs=1e-9)
    assert record.ate == pytest.approx(0.0, abs=1e-9)
    assert record.steps == traj.n


def test_score_plan_immediate_stop(train_trajs):
    traj = max(train_trajs, key=lambda t: t.n)
    record = score_plan(traj, "random", "concise", "train", Plan([Action.stop()], [], True, 0.0), align_ate=False)
    goal = np.asarray(traj.poses[-1].position) - np.asarray(traj.poses[0].position)
    assert record.final_distance == pytest.approx(float(np.linalg.norm(goal)))
    assert record.success == (record.final_distance < traj.average_step_size)


def test_ablation_spec_validation():
    assert [v.name for v in AblationSpec.for_axis("language").variants] == ["with_language", "no_language"]
    assert len(AblationSpec.for_axis("instruction_style").variants) == 3
    with pytest.raises(ConfigError):
        AblationSpec.for_axis("depth")
    with pytest.raises(ConfigError):
        AblationSpec("action", [])
    with pytest.raises(ConfigError):
        AblationSpec("action", [Variant("bad", {"wm.use_language": False})])


def test_variant_config_only_touches_axis(tiny_config):
    variant = AblationSpec.for_axis("context_size").variants[-1]
    cfg = variant_config(tiny_config, "context_size", variant)
    assert cfg.wm.context_size == 4 and cfg.uni.context_size == 4
    assert cfg.wm.width == tiny_config.wm.width
    assert cfg.seed == tiny_config.seed
    assert cfg.run_dir == tiny_config.run_dir / "ablations" / "context_size" / "k4"


def test_cli_exit_codes(tmp_path, tiny_overrides):
    overrides = [*tiny_overrides, f"output_dir={tmp_path / 'run'}"]
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["generate", "not-an-override"]) == EXIT_USAGE
    assert main(["train-ac", *overrides]) == EXIT_ERROR
    assert main(["generate", *overrides]) == EXIT_OK
    assert (tmp_path / "run" / "data" / "manifest.json").is_file()
    assert (tmp_path / "run" / "logs" / "run.log").is_file()


def test_training_curves_have_one_row_per_step(trained_run):
    ctx, _ = trained_run
    rows = [json.loads(line) for line in ctx.store.path("curves/wm.jsonl").read_text().splitlines()]
    assert [r["step"] for r in rows] == list(range(1, ctx.cfg.wm.steps + 1))


def test_eval_is_reproducible(trained_run):
    ctx, _ = trained_run

    def records():
        report = cmd_eval(ctx, split="val_seen", families=["wm_ac", "random"])
        return [replace(r, latency_s=0.0) for r in report.records]

    assert records() == records()


@pytest.mark.slow
def test_context_size_ablation_grid(tmp_path, tiny_overrides):
    ctx = _context(tmp_path / "run", tiny_overrides)
    ablation = cmd_ablate(ctx, AblationSpec.for_axis("context_size"))
    assert [(r["variant"], r["family"]) for r in ablation.rows] == [
        (v, f) for v in ("k1", "k2", "k4") for f in ("uni", "wm_ac")
    ]
    assert all(r["delta_sr"] == 0.0 for r in ablation.rows if r["variant"] == "k1")
    assert set(ablation.provenance) == {"k1", "k2", "k4"}
    assert ctx.store.exists("ablations/context_size/ablation.json")
    cmd_eval(ctx, families=["random"])
    assert "Ablation: context_size" in cmd_report(ctx)
