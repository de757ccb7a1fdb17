"""
Evaluation: plan open-loop from each trajectory's first observation and
instruction, score the predicted path against the ground truth, score the
imagined frames, and write the report, plots and imagined traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from lcvn.agent.inference import navigate
from lcvn.datagen.dataset import write_trajectories
from lcvn.datagen.trajectory import Trajectory
from lcvn.datagen.world import Action
from lcvn.errors import ConfigError, DatasetError
from lcvn.metrics import (
    LatentEmbedders,
    MetricsReport,
    TrajectoryRecord,
    UniImaginer,
    WorldModelImaginer,
    ate,
    dreamsim_terms,
    integrate_actions,
    pad_pair,
    plot_horizon_curves,
    plot_paths,
    psnr,
    rpe,
    ssim,
)
from lcvn.metrics.rollout import Imaginer
from lcvn.monitoring.metrics import Stopwatch
from lcvn.pipeline.context import CHECKPOINTS, RunContext
from lcvn.pipeline.generate import load_dataset
from lcvn.pipeline.train import load_agent, load_uni, load_vae, load_world_model
from lcvn.uni.inference import uni_rollout

PLOTS_PER_GROUP = 4


@dataclass
class Plan:
    """What a family produced for one trajectory: actions (ending in stop) and the frames it imagined."""

    actions: List[Action]
    frames: List[np.ndarray]
    stopped: bool
    latency_s: float


@dataclass
class Family:
    name: str
    planner: Callable[[Trajectory, str], Plan]
    imaginer: Optional[Imaginer] = None
    exported: List[Trajectory] = field(default_factory=list)


def random_actions(rng: np.random.Generator, t_max: int, stop_prob: float, step_size: float) -> List[Action]:
    """Bounded random moves, stopping with probability ``stop_prob`` after the first step."""
    actions: List[Action] = []
    for t in range(t_max):
        if t > 0 and rng.random() < stop_prob:
            actions.append(Action.stop())
            break
        actions.append(
            Action.clamped(
                rng.uniform(0.0, 2.0 * step_size),
                rng.uniform(-0.5 * step_size, 0.5 * step_size),
                rng.uniform(-0.3, 0.3),
            )
        )
    return actions


def _frames(tensor: torch.Tensor) -> List[np.ndarray]:
    return [f.detach().cpu().numpy().astype(np.float32) for f in tensor]


def _wm_ac_family(ctx: RunContext) -> Family:
    wm, codec = load_world_model(ctx)
    agent = load_agent(ctx)
    wm_cfg = ctx.cfg.wm

    def planner(traj: Trajectory, style: str) -> Plan:
        sw = Stopwatch()
        with sw:
            result = navigate(
                traj.observations[0],
                traj.instructions[style].tokens,
                codec,
                wm,
                agent,
                ctx.cfg.eval.t_max,
                hold_plan=ctx.cfg.ac.hold_plan,
                timeshift=wm_cfg.timeshift,
                sampler_steps=wm_cfg.sampler_steps,
                seed=ctx.cfg.seed,
            )
        with torch.no_grad():
            frames = _frames(codec.decode(result.latents)) if len(result.latents) else []
        return Plan(result.actions, frames, result.stopped, sw.total / max(len(result.actions), 1))

    imaginer = WorldModelImaginer(wm, codec, wm_cfg.timeshift, wm_cfg.sampler_steps, ctx.cfg.seed)
    return Family("wm_ac", planner, imaginer)


def _uni_family(ctx: RunContext) -> Family:
    model, space, codebook = load_uni(ctx)
    cfg = ctx.cfg.uni

    def planner(traj: Trajectory, style: str) -> Plan:
        sw = Stopwatch()
        with sw:
            result = uni_rollout(
                model,
                space,
                codebook,
                traj.observations[0],
                traj.instructions[style].tokens,
                cfg,
                ctx.cfg.eval.t_max,
                seed=ctx.cfg.seed,
                decode_observations=True,
            )
        frames = [np.asarray(traj.observations[0], dtype=np.float32)] + list(result.observations)
        return Plan(result.actions, frames, result.stopped, sw.total / max(len(result.actions), 1))

    return Family("uni", planner, UniImaginer(model, space, codebook, cfg))


def _random_family(ctx: RunContext) -> Family:
    rng = np.random.default_rng(ctx.cfg.seed)

    def planner(traj: Trajectory, style: str) -> Plan:
        actions = random_actions(rng, ctx.cfg.eval.t_max, ctx.cfg.eval.random_stop_prob, traj.average_step_size)
        return Plan(actions, [], bool(actions) and actions[-1].is_stop, 0.0)

    return Family("random", planner)


FAMILY_BUILDERS: Dict[str, Callable[[RunContext], Family]] = {
    "wm_ac": _wm_ac_family,
    "uni": _uni_family,
    "random": _random_family,
}


def _embedders(ctx: RunContext) -> Optional[LatentEmbedders]:
    """DreamSim embedders need a trained VAE and world-model instruction embedder."""
    if not (ctx.store.exists(CHECKPOINTS["vae"]) and ctx.store.exists(CHECKPOINTS["wm"])):
        return None
    wm, _ = load_world_model(ctx)
    return LatentEmbedders(load_vae(ctx), wm.instructions, seed=ctx.cfg.seed)


def _imagined_trace(traj: Trajectory, family: str, style: str, plan: Plan) -> Trajectory:
    actions = list(plan.actions)
    if not actions or not actions[-1].is_stop:
        actions.append(Action.stop())
    frames = list(plan.frames) or [np.asarray(traj.observations[0], dtype=np.float32)]
    frames = (frames + [frames[-1]] * len(actions))[: len(actions) + 1]
    return Trajectory(
        layout_id=traj.layout_id,
        trajectory_id=f"{traj.trajectory_id}-{family}-{style}",
        seed=traj.seed,
        poses=tuple(integrate_actions(traj.poses[0], actions)),
        actions=tuple(actions),
        observations=np.stack(frames).astype(np.float32),
        instructions={style: traj.instructions[style]},
        average_step_size=traj.average_step_size,
        goal=traj.goal,
        scene=traj.scene,
        provenance="imagined",
    )


def score_plan(
    traj: Trajectory, family: str, style: str, split: str, plan: Plan, align_ate: bool
) -> TrajectoryRecord:
    """Navigation metrics for one plan; the goal is the final ground-truth pose."""
    predicted = integrate_actions(traj.poses[0], plan.actions)
    pred, ref = pad_pair(predicted, list(traj.poses))
    final = np.asarray(predicted[-1].position)
    goal = np.asarray(traj.poses[-1].position)
    distance = float(np.linalg.norm(final - goal))
    return TrajectoryRecord(
        trajectory_id=traj.trajectory_id,
        family=family,
        style=style,
        split=split,
        steps=len(plan.actions),
        stopped=plan.stopped,
        final_distance=distance,
        success=distance < traj.average_step_size,
        ate=ate(pred, ref, align=align_ate),
        rpe=rpe(pred, ref) if len(pred) >= 2 else None,
        latency_s=plan.latency_s,
    )


def cmd_eval(
    ctx: RunContext, split: Optional[str] = None, families: Optional[Sequence[str]] = None, progress: bool = False
) -> MetricsReport:
    ecfg = ctx.cfg.eval
    split = split or ecfg.split
    names = list(families or ecfg.families)
    unknown = [n for n in names if n not in FAMILY_BUILDERS]
    if unknown:
        raise ConfigError(f"unknown model families {unknown}; choose from {sorted(FAMILY_BUILDERS)}")
    log = ctx.phase_log("eval", split=split)

    trajs = load_dataset(ctx, [split]).split(split)
    if ecfg.max_trajectories:
        trajs = trajs[: ecfg.max_trajectories]
    if not trajs:
        raise DatasetError(f"split {split!r} has no trajectories to evaluate")

    embedders = _embedders(ctx)
    counts: Dict[str, int] = {"trajectories": len(trajs), "imagination_skipped": 0, "dreamsim_zero_norm": 0}
    if embedders is None:
        counts["dreamsim_unavailable"] = 1
    records: List[TrajectoryRecord] = []
    out_dir = ctx.store.path("eval")
    n = ecfg.horizon_n

    for name in names:
        family = FAMILY_BUILDERS[name](ctx)
        log.info("evaluating family", extra={"family": name, "trajectories": len(trajs)})
        plotted: Dict[str, int] = {}
        for traj in tqdm(trajs, desc=f"eval {name}", disable=not progress):
            for style in ecfg.styles:
                plan = family.planner(traj, style)
                record = score_plan(traj, name, style, split, plan, ecfg.align_ate)
                if family.imaginer is not None:
                    _score_imagination(record, family.imaginer, traj, style, n, counts)
                if embedders is not None and plan.frames[1:]:
                    terms, zero = dreamsim_terms(
                        plan.frames[1:], traj.instructions[style].tokens, embedders.image, embedders.text
                    )
                    record.dreamsim = float(terms.mean())
                    record.dreamsim_at_n = float(terms[n - 1]) if len(terms) >= n else None
                    counts["dreamsim_zero_norm"] += zero
                records.append(record)
                if family.imaginer is not None:
                    family.exported.append(_imagined_trace(traj, name, style, plan))
                if ecfg.plots and plotted.get(style, 0) < PLOTS_PER_GROUP:
                    plotted[style] = plotted.get(style, 0) + 1
                    plot_paths(
                        [p.position for p in integrate_actions(traj.poses[0], plan.actions)],
                        [p.position for p in traj.poses],
                        out_dir / "plots" / f"{name}_{style}_{traj.trajectory_id}.png",
                        title=f"{name} / {style}",
                        goal=traj.poses[-1].position,
                    )
        if family.exported:
            digest = write_trajectories(out_dir / f"{split}_{name}_imagined.lcvnl", family.exported, split, "imagined")
            ctx.record_input(f"eval/{split}_{name}_imagined", digest)

    report = MetricsReport(
        records=records,
        horizon_n=n,
        config=ctx.manifest.get("config", {}),
        provenance=ctx.provenance(),
        counts=counts,
        embedder=embedders.description if embedders is not None else "",
    )
    paths = report.write(out_dir, name=f"report_{split}")
    if ecfg.plots:
        plot_horizon_curves(report, out_dir / "plots" / f"{split}_ssim_at_n.png", "ssim")
        plot_horizon_curves(report, out_dir / "plots" / f"{split}_psnr_at_n.png", "psnr")
    ctx.record_command("eval", split=split, families=names, report=str(paths["json"]), counts=counts)
    log.info("evaluation written", extra={"report": str(paths["json"]), **counts})
    return report


def _score_imagination(
    record: TrajectoryRecord, imaginer: Imaginer, traj: Trajectory, style: str, n: int, counts: Dict[str, int]
) -> None:
    """SSIM/PSNR at one step, at horizon n, and the curve in between from a single open-loop rollout."""
    horizon = min(n, traj.n)
    if horizon < 1:
        return
    frames = imaginer.imagine(traj, style, horizon)
    ssim_curve = [ssim(traj.observations[h], frames[h - 1]) for h in range(1, horizon + 1)]
    psnr_curve = [psnr(traj.observations[h], frames[h - 1]) for h in range(1, horizon + 1)]
    record.ssim, record.psnr = ssim_curve[0], psnr_curve[0]
    if horizon < n:
        counts["imagination_skipped"] += 1
        return
    record.ssim_curve, record.psnr_curve = ssim_curve, psnr_curve
    record.ssim_at_n, record.psnr_at_n = ssim_curve[-1], psnr_curve[-1]
