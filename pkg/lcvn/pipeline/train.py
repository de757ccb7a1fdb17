"""
Training commands. Every phase writes a checkpoint every ``checkpoint_every``
steps and at the end, holding the module weights plus the trainer state
(optimizer, scheduler, random generator, step), so an interrupted run resumes
to the same final weights as an uninterrupted one.
"""

from __future__ import annotations

from typing import Any, Dict, Mapping, Protocol, Tuple

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from lcvn.agent.model import ActorCritic
from lcvn.agent.trainer import ActorCriticTrainer
from lcvn.config import to_dict
from lcvn.datagen.trajectory import Trajectory
from lcvn.errors import ConfigError, FrozenModelError
from lcvn.infra.checkpoint import load_checkpoint, save_checkpoint, state_checksum
from lcvn.monitoring.metrics import MetricsLog
from lcvn.pipeline.context import RunContext, curve_key
from lcvn.pipeline.generate import load_dataset
from lcvn.tokenizers.space import TokenSpace, load_tokenizers, save_tokenizers
from lcvn.tokenizers.vq import Codebook, train_codebook
from lcvn.uni.model import UniTransformer
from lcvn.uni.trainer import UniTrainer
from lcvn.worldmodel.codec import LatentCodec, PixelCodec, StateCodec
from lcvn.worldmodel.model import WorldModel
from lcvn.worldmodel.trainer import VAETrainer, WorldModelTrainer
from lcvn.worldmodel.vae import VAE

PHASES = ("wm", "ac", "uni")


class Trainer(Protocol):
    step_count: int

    def step(self) -> Dict[str, float]: ...

    def state_dict(self) -> Dict[str, Any]: ...

    def load_state_dict(self, state: Dict[str, Any]) -> None: ...


def _save(
    ctx: RunContext, name: str, modules: Mapping[str, nn.Module], trainer: Trainer, meta: Dict[str, Any], complete: bool
) -> None:
    save_checkpoint(
        ctx.checkpoint_path(name),
        name,
        {key: module.state_dict() for key, module in modules.items()},
        config=to_dict(ctx.cfg),
        extra={"trainer": trainer.state_dict(), "meta": meta, "complete": complete},
    )


def run_phase(
    ctx: RunContext,
    name: str,
    modules: Mapping[str, nn.Module],
    trainer: Trainer,
    total_steps: int,
    meta: Dict[str, Any],
    progress: bool = False,
) -> Dict[str, float]:
    """Train to ``total_steps``, resuming from the phase checkpoint if one exists."""
    log = ctx.phase_log(name)
    curve = MetricsLog(ctx.store.path(curve_key(name)))
    path = ctx.checkpoint_path(name)
    if path.is_file():
        payload = load_checkpoint(path, expected_kind=name)
        for key, module in modules.items():
            module.load_state_dict(payload["states"][key])
        trainer.load_state_dict(payload["extra"]["trainer"])
        log.info("resuming", extra={"step": trainer.step_count, "total": total_steps})
    curve.truncate(trainer.step_count)

    last: Dict[str, float] = {}
    every = ctx.cfg.checkpoint_every
    bar = tqdm(total=total_steps, initial=trainer.step_count, desc=name, disable=not progress)
    while trainer.step_count < total_steps:
        last = trainer.step()
        curve.append(trainer.step_count, last)
        bar.update(1)
        if ctx.cfg.log_every and trainer.step_count % ctx.cfg.log_every == 0:
            log.info("training step", extra={"step": trainer.step_count, **last})
        if every and trainer.step_count % every == 0 and trainer.step_count < total_steps:
            _save(ctx, name, modules, trainer, meta, complete=False)
    bar.close()
    _save(ctx, name, modules, trainer, meta, complete=True)
    ctx.record_checkpoint(name)
    if not last:
        records = curve.records()
        last = {k: v for k, v in records[-1].items() if k != "step"} if records else {}
    log.info("phase finished", extra={"step": trainer.step_count, **last})
    return last


# loaders


def _payload(ctx: RunContext, name: str) -> Dict[str, Any]:
    return load_checkpoint(ctx.require_checkpoint(name), expected_kind=name)


def load_vae(ctx: RunContext) -> VAE:
    payload = _payload(ctx, "vae")
    meta = payload["extra"]["meta"]
    vae = VAE(meta["latent_dim"], meta["image_size"], meta["channels"])
    vae.load_state_dict(payload["states"]["vae"])
    return vae.eval()


def load_codec(ctx: RunContext) -> StateCodec:
    if ctx.cfg.wm.space == "pixel":
        return PixelCodec(ctx.cfg.datagen.image_size, ctx.cfg.wm.pixel_pool)
    return LatentCodec(load_vae(ctx))


def load_world_model(ctx: RunContext) -> Tuple[WorldModel, StateCodec]:
    payload = _payload(ctx, "wm")
    meta = payload["extra"]["meta"]
    codec = load_codec(ctx)
    if codec.dim != meta["state_dim"] or codec.space != meta["space"]:
        raise ConfigError(
            f"world-model checkpoint expects {meta['space']} states of dim {meta['state_dim']}, "
            f"config gives {codec.space} dim {codec.dim}"
        )
    wm = WorldModel.from_config(ctx.cfg.wm, meta["state_dim"], meta["step_size"])
    wm.load_state_dict(payload["states"]["wm"])
    return wm.eval(), codec


def load_agent(ctx: RunContext) -> ActorCritic:
    payload = _payload(ctx, "ac")
    meta = payload["extra"]["meta"]
    agent = ActorCritic.from_config(ctx.cfg.ac, meta["state_dim"], meta["instr_dim"])
    agent.load_state_dict(payload["states"]["agent"])
    return agent.eval()


def load_uni(ctx: RunContext) -> Tuple[UniTransformer, TokenSpace, Codebook]:
    space, codebook = load_tokenizers(ctx.require_checkpoint("tokenizers"))
    payload = _payload(ctx, "uni")
    model = UniTransformer.from_config(ctx.cfg.uni, space.vocab_size)
    model.load_state_dict(payload["states"]["uni"])
    return model.eval(), space, codebook


# phases


def _train_split(ctx: RunContext) -> Tuple[list[Trajectory], float]:
    dataset = load_dataset(ctx, ["train"])
    return dataset.split("train"), dataset.average_step_size


def train_vae(ctx: RunContext, trajs: list[Trajectory], progress: bool = False) -> VAE:
    cfg = ctx.cfg.vae
    torch.manual_seed(ctx.cfg.seed)
    vae = VAE(cfg.latent_dim, ctx.cfg.datagen.image_size, tuple(cfg.channels))
    trainer = VAETrainer(vae, cfg, trajs, seed=ctx.cfg.seed)
    meta = {"latent_dim": cfg.latent_dim, "image_size": ctx.cfg.datagen.image_size, "channels": list(cfg.channels)}
    run_phase(ctx, "vae", {"vae": vae}, trainer, cfg.steps, meta, progress)
    return vae.eval()


def train_world_model(ctx: RunContext, progress: bool = False) -> Dict[str, float]:
    trajs, step_size = _train_split(ctx)
    cfg = ctx.cfg.wm
    if cfg.space == "latent":
        train_vae(ctx, trajs, progress)
    codec = load_codec(ctx)
    torch.manual_seed(ctx.cfg.seed + 1)
    wm = WorldModel.from_config(cfg, codec.dim, step_size)
    trainer = WorldModelTrainer(wm, codec, cfg, trajs, seed=ctx.cfg.seed)
    meta = {"state_dim": codec.dim, "space": codec.space, "step_size": step_size}
    losses = run_phase(ctx, "wm", {"wm": wm}, trainer, cfg.steps, meta, progress)
    ctx.record_command("train-wm", steps=cfg.steps, final=losses)
    return losses


def train_actor_critic(ctx: RunContext, progress: bool = False) -> Dict[str, float]:
    wm, codec = load_world_model(ctx)
    trajs, _ = _train_split(ctx)
    cfg = ctx.cfg.ac
    torch.manual_seed(ctx.cfg.seed + 2)
    agent = ActorCritic.from_config(cfg, codec.dim, ctx.cfg.wm.instr_dim)
    trainer = ActorCriticTrainer(agent, wm, codec, cfg, ctx.cfg.wm, trajs, seed=ctx.cfg.seed)
    path = ctx.checkpoint_path("ac")
    if path.is_file():
        stored = load_checkpoint(path, expected_kind="ac")["extra"]["trainer"].get("wm_checksum")
        if stored is not None and stored != trainer.guard.checksum:
            raise FrozenModelError("world-model checkpoint changed since actor-critic training started")
    meta = {"state_dim": codec.dim, "instr_dim": ctx.cfg.wm.instr_dim, "wm_checksum": state_checksum(wm)}
    losses = run_phase(ctx, "ac", {"agent": agent}, trainer, cfg.steps, meta, progress)
    trainer.guard.verify()
    ctx.record_command("train-ac", steps=cfg.steps, final=losses)
    return losses


def ensure_tokenizers(ctx: RunContext, trajs: list[Trajectory]) -> Tuple[TokenSpace, Codebook]:
    """Load the frozen tokenizers, training the codebook once if absent."""
    path = ctx.checkpoint_path("tokenizers")
    if path.is_file():
        return load_tokenizers(path)
    cfg = ctx.cfg.uni
    obs = np.concatenate([t.observations for t in trajs])
    codebook = train_codebook(obs, cfg.codebook_size, seed=ctx.cfg.seed, pool=cfg.codebook_pool, patch=cfg.codebook_patch)
    space = TokenSpace(codebook_size=codebook.size)
    save_tokenizers(path, space, codebook)
    ctx.record_checkpoint("tokenizers")
    return space, codebook


def train_uni(ctx: RunContext, progress: bool = False) -> Dict[str, float]:
    trajs, _ = _train_split(ctx)
    cfg = ctx.cfg.uni
    space, codebook = ensure_tokenizers(ctx, trajs)
    torch.manual_seed(ctx.cfg.seed + 3)
    model = UniTransformer.from_config(cfg, space.vocab_size)
    trainer = UniTrainer(model, space, codebook, cfg, trajs, seed=ctx.cfg.seed)
    meta = {"vocab_size": space.vocab_size, "layout": space.layout()}
    losses = run_phase(ctx, "uni", {"uni": model}, trainer, cfg.steps, meta, progress)
    trainer.verify_tokenizers()
    ctx.record_command("train-uni", steps=cfg.steps, final=losses)
    return losses


def cmd_train(ctx: RunContext, phase: str, progress: bool = False) -> Dict[str, float]:
    if phase == "wm":
        return train_world_model(ctx, progress)
    if phase == "ac":
        return train_actor_critic(ctx, progress)
    if phase == "uni":
        return train_uni(ctx, progress)
    raise ConfigError(f"unknown training phase {phase!r}; choose from {PHASES}")

