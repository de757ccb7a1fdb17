"""
POST /plan: open-loop planning from one observation and an instruction.
Models are loaded from ``LCVN_RUN_DIR`` on first use and cached per family.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from fastapi import APIRouter, Depends, HTTPException
from pydantic import BaseModel, Field

from lcvn import config
from lcvn.agent.inference import navigate
from lcvn.datagen.instructions import Instruction
from lcvn.datagen.render import render_observation
from lcvn.datagen.world import Action, Pose, generate_layout, integrate_actions
from lcvn.errors import GenerationError, LCVNError, PrerequisiteError
from lcvn.monitoring.metrics import Stopwatch
from lcvn.pipeline.context import CONFIG_KEY, RunContext
from lcvn.pipeline.train import load_agent, load_uni, load_world_model
from lcvn.uni.inference import uni_rollout

logger = logging.getLogger(__name__)

router = APIRouter()


class PoseBody(BaseModel):
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0


class RenderBody(BaseModel):
    layout_seed: int
    pose: PoseBody = Field(default_factory=PoseBody)


class PlanRequest(BaseModel):
    instruction: str
    observation: Optional[List[List[List[float]]]] = None
    render: Optional[RenderBody] = None
    family: Literal["wm_ac", "uni"] = "wm_ac"
    t_max: int = Field(default=32, ge=1, le=256)
    seed: int = 0


class PlanResponse(BaseModel):
    family: str
    actions: List[Dict[str, Any]]
    poses: List[List[float]]
    stopped: bool
    latency_s: float


class Planner:
    """Lazily loaded models of one run directory."""

    def __init__(self, run_dir: Path) -> None:
        cfg_path = run_dir / CONFIG_KEY
        if not cfg_path.is_file():
            raise PrerequisiteError(f"no run config at {cfg_path}")
        cfg = config.load_run_config(str(cfg_path), [f"output_dir={run_dir}"])
        self.ctx = RunContext.open(cfg)
        self._models: Dict[str, Any] = {}

    def _load(self, family: str) -> Any:
        if family not in self._models:
            logger.info("loading models", extra={"family": family, "run_dir": str(self.ctx.store.root)})
            if family == "wm_ac":
                wm, codec = load_world_model(self.ctx)
                self._models[family] = (wm, codec, load_agent(self.ctx))
            else:
                self._models[family] = load_uni(self.ctx)
        return self._models[family]

    def observation(self, req: PlanRequest) -> np.ndarray:
        dg = self.ctx.cfg.datagen
        if req.observation is not None:
            obs = np.asarray(req.observation, dtype=np.float32)
            expected = (dg.image_size, dg.image_size, 3)
            if obs.shape != expected:
                raise GenerationError(f"observation shape {obs.shape} does not match {expected}")
            return obs
        if req.render is None:
            raise GenerationError("provide either an observation or a render request")
        layout = generate_layout(req.render.layout_seed, dg.n_landmarks, (dg.width, dg.height))
        pose = Pose(req.render.pose.x, req.render.pose.y, req.render.pose.yaw)
        return render_observation(layout, pose, dg.image_size)

    def plan(self, req: PlanRequest) -> PlanResponse:
        tokens = Instruction.from_words("concise", req.instruction.lower().split()).tokens
        obs = self.observation(req)
        cfg = self.ctx.cfg
        sw = Stopwatch()
        with sw:
            if req.family == "wm_ac":
                wm, codec, agent = self._load("wm_ac")
                result = navigate(
                    obs, tokens, codec, wm, agent, req.t_max,
                    hold_plan=cfg.ac.hold_plan, timeshift=cfg.wm.timeshift,
                    sampler_steps=cfg.wm.sampler_steps, seed=req.seed,
                )
                actions, stopped = result.actions, result.stopped
            else:
                model, space, codebook = self._load("uni")
                rollout = uni_rollout(model, space, codebook, obs, tokens, cfg.uni, req.t_max, seed=req.seed)
                actions, stopped = rollout.actions, rollout.stopped
        start = Pose(req.render.pose.x, req.render.pose.y, req.render.pose.yaw) if req.render else Pose(0.0, 0.0, 0.0)
        return PlanResponse(
            family=req.family,
            actions=[_action_dict(a) for a in actions],
            poses=[[p.x, p.y, p.yaw] for p in integrate_actions(start, actions)],
            stopped=stopped,
            latency_s=sw.total,
        )


def _action_dict(action: Action) -> Dict[str, Any]:
    return {"dx": action.dx, "dy": action.dy, "dyaw": action.dyaw, "stop": action.is_stop}


@lru_cache(maxsize=1)
def get_planner() -> Planner:
    if not config.RUN_DIR:
        raise PrerequisiteError("LCVN_RUN_DIR is not set")
    return Planner(Path(config.RUN_DIR))


def planner_dependency() -> Planner:
    try:
        return get_planner()
    except LCVNError as exc:
        raise HTTPException(status_code=503, detail=str(exc)) from exc


@router.post("/plan", response_model=PlanResponse)
def plan(req: PlanRequest, planner: Planner = Depends(planner_dependency)) -> PlanResponse:
    try:
        return planner.plan(req)
    except GenerationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except PrerequisiteError as exc:
        raise HTTPException(status_code=503, detail=str(exc)) from exc
