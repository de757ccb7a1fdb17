from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

from omegaconf import OmegaConf

from lcvn.errors import ConfigError

OUTPUT_ROOT = os.getenv("LCVN_OUTPUT_ROOT", "./runs")
RUN_DIR = os.getenv("LCVN_RUN_DIR")

STYLES = ("concise", "intricate", "landmark")
FAMILIES = ("wm_ac", "uni", "random")
MODEL_SIZES = {"S": 1, "B": 2, "L": 3, "XL": 4}


@dataclass
class DatagenConfig:
    seed: int = 0
    image_size: int = 32
    n_landmarks: int = 4
    width: float = 10.0
    height: float = 10.0
    layouts_seen: int = 8
    layouts_unseen: int = 4
    train: int = 500
    val_seen: int = 50
    val_unseen: int = 50
    test: int = 50
    max_len: int = 24
    step_min: float = 0.2
    step_max: float = 0.4


@dataclass
class VAEConfig:
    latent_dim: int = 16
    channels: List[int] = field(default_factory=lambda: [16, 32])
    beta: float = 1e-3
    lr: float = 1e-3
    warmup_steps: int = 50
    steps: int = 1500
    batch_size: int = 64


@dataclass
class WMConfig:
    context_size: int = 2
    space: str = "latent"
    instr_dim: int = 32
    width: int = 64
    size: str = "S"
    depth: int = 2
    heads: int = 4
    cond_freqs: int = 16
    levels: int = 64
    sampler_steps: int = 8
    lr: float = 3e-4
    warmup_steps: int = 100
    batch_size: int = 8
    steps: int = 2000
    timeshift: int = 1
    max_timeshift: int = 1
    df_mode: str = "independent"
    use_language: bool = True
    use_action: bool = True
    use_timeshift: bool = True
    pixel_pool: int = 4
    style: str = "all"

    @property
    def model_width(self) -> int:
        return self.width * MODEL_SIZES[self.size]


@dataclass
class ACConfig:
    gamma: float = 0.95
    lambda_: float = 0.95
    horizon: int = 8
    alpha1: float = 1.0
    alpha2: float = 0.1
    tau: float = 0.02
    plan_dim: int = 8
    hidden: int = 128
    align_dim: int = 16
    margin: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    warmup_steps: int = 50
    batch_size: int = 4
    steps: int = 1000
    plan_recon_weight: float = 1.0
    plan_prior_weight: float = 1e-3
    actor_input: str = "expert"
    hold_plan: bool = False
    use_language: bool = True
    checksum_every: int = 1
    style: str = "all"


@dataclass
class UniConfig:
    context_size: int = 2
    lambda_joint: float = 1.0
    depth: int = 4
    width: int = 64
    heads: int = 4
    codebook_size: int = 64
    codebook_pool: int = 4
    codebook_patch: int = 2
    budget: int = 512
    lr: float = 3e-4
    warmup_steps: int = 100
    batch_size: int = 16
    steps: int = 3000
    mode: str = "joint"
    temperature: float = 0.0
    use_language: bool = True
    style: str = "all"


@dataclass
class EvalConfig:
    split: str = "val_seen"
    families: List[str] = field(default_factory=lambda: ["wm_ac", "uni"])
    t_max: int = 32
    horizon_n: int = 8
    styles: List[str] = field(default_factory=lambda: list(STYLES))
    max_trajectories: int = 0
    align_ate: bool = False
    random_stop_prob: float = 0.1
    plots: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    run_id: str = "default"
    output_dir: str = ""
    log_every: int = 50
    checkpoint_every: int = 500
    datagen: DatagenConfig = field(default_factory=DatagenConfig)
    vae: VAEConfig = field(default_factory=VAEConfig)
    wm: WMConfig = field(default_factory=WMConfig)
    ac: ACConfig = field(default_factory=ACConfig)
    uni: UniConfig = field(default_factory=UniConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Path(OUTPUT_ROOT) / self.run_id


def uni_tokens_per_frame(cfg: UniConfig, image_size: int) -> int:
    side = image_size // (cfg.codebook_pool * cfg.codebook_patch)
    return side * side


def validate(cfg: RunConfig) -> RunConfig:
    """Check cross-field invariants; raise ConfigError naming the first violation."""
    wm, ac, uni, dg = cfg.wm, cfg.ac, cfg.uni, cfg.datagen
    if wm.context_size < 1 or uni.context_size < 1:
        raise ConfigError("context size k must be >= 1")
    if wm.sampler_steps < 1 or wm.sampler_steps > wm.levels:
        raise ConfigError(f"sampler_steps S={wm.sampler_steps} must lie in [1, L={wm.levels}]")
    if wm.space not in ("latent", "pixel"):
        raise ConfigError(f"unknown state space {wm.space!r}")
    if wm.df_mode not in ("independent", "target_only"):
        raise ConfigError(f"unknown df_mode {wm.df_mode!r}")
    if wm.size not in MODEL_SIZES:
        raise ConfigError(f"unknown model size {wm.size!r}; choose from {sorted(MODEL_SIZES)}")
    if wm.max_timeshift < wm.timeshift or wm.timeshift < 1:
        raise ConfigError("timeshift must satisfy 1 <= timeshift <= max_timeshift")
    for name, value in (("gamma", ac.gamma), ("lambda_", ac.lambda_), ("tau", ac.tau)):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"ac.{name}={value} outside [0, 1]")
    if ac.horizon < 1:
        raise ConfigError("ac.horizon must be >= 1")
    if ac.actor_input not in ("expert", "imagined"):
        raise ConfigError(f"unknown ac.actor_input {ac.actor_input!r}")
    if uni.mode not in ("joint", "interleave"):
        raise ConfigError(f"unknown uni.mode {uni.mode!r}")
    if dg.image_size % (uni.codebook_pool * uni.codebook_patch) != 0:
        raise ConfigError("image_size must be divisible by codebook_pool * codebook_patch")
    for style in (wm.style, ac.style, uni.style):
        if style != "all" and style not in STYLES:
            raise ConfigError(f"unknown instruction style {style!r}")
    for fam in cfg.eval.families:
        if fam not in FAMILIES:
            raise ConfigError(f"unknown agent family {fam!r}")
    # imported lazily: the uni package depends on this module
    from lcvn.uni.sequence import check_budget

    check_budget(uni, uni_tokens_per_frame(uni, dg.image_size))
    return cfg


def load_run_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Merge the schema defaults, an optional YAML file and ``section.key=value`` overrides."""
    schema = OmegaConf.structured(RunConfig)
    merged = schema
    try:
        if path:
            merged = OmegaConf.merge(merged, OmegaConf.load(path))
        overrides = list(overrides)
        if overrides:
            merged = OmegaConf.merge(merged, OmegaConf.from_dotlist(overrides))
        cfg: RunConfig = OmegaConf.to_object(merged)  # type: ignore[assignment]
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"could not load run config: {exc}") from exc
    return validate(cfg)


def to_yaml(cfg: RunConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(cfg), sort_keys=True)


def to_dict(cfg: RunConfig) -> dict:
    return OmegaConf.to_container(OmegaConf.structured(cfg), resolve=True)  # type: ignore[return-value]


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(to_yaml(cfg).encode("utf-8")).hexdigest()


def save_run_config(cfg: RunConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_yaml(cfg), encoding="utf-8")
