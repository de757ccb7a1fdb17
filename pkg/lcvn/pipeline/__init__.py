from lcvn.pipeline.ablate import AblationReport, AblationSpec, Variant, cmd_ablate, variant_config
from lcvn.pipeline.context import RunContext, seed_everything
from lcvn.pipeline.evaluate import cmd_eval, random_actions, score_plan
from lcvn.pipeline.generate import cmd_generate, load_dataset
from lcvn.pipeline.report import cmd_report
from lcvn.pipeline.train import (
    cmd_train,
    load_agent,
    load_codec,
    load_uni,
    load_vae,
    load_world_model,
    run_phase,
)

__all__ = [
    "AblationReport",
    "AblationSpec",
    "RunContext",
    "Variant",
    "cmd_ablate",
    "cmd_eval",
    "cmd_generate",
    "cmd_report",
    "cmd_train",
    "load_agent",
    "load_codec",
    "load_dataset",
    "load_uni",
    "load_vae",
    "load_world_model",
    "random_actions",
    "run_phase",
    "score_plan",
    "seed_everything",
    "variant_config",
]
