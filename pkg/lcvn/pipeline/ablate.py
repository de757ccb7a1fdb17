"""
Ablations: each variant is an independent sub-run under
``<run>/ablations/<axis>/<variant>`` sharing the parent run's dataset and
seed; only the keys of the named axis differ from the base config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from omegaconf import OmegaConf

from lcvn.config import STYLES, RunConfig, validate
from lcvn.datagen.dataset import MANIFEST_NAME
from lcvn.errors import ConfigError
from lcvn.metrics.report import MetricsReport
from lcvn.pipeline.context import RunContext
from lcvn.pipeline.evaluate import cmd_eval
from lcvn.pipeline.generate import cmd_generate
from lcvn.pipeline.train import cmd_train

DELTA_COLUMNS = ("ate", "rpe", "sr", "ssim", "ssim_at_n", "dreamsim")

AXIS_KEYS: Dict[str, tuple] = {
    "language": ("wm.use_language", "ac.use_language", "uni.use_language"),
    "action": ("wm.use_action",),
    "time": ("wm.use_timeshift",),
    "context_size": ("wm.context_size", "uni.context_size"),
    "instruction_style": ("wm.style", "ac.style", "uni.style"),
    "latent_vs_pixel": ("wm.space",),
}


@dataclass(frozen=True)
class Variant:
    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)


def _default_variants(axis: str) -> List[Variant]:
    if axis == "language":
        off = {key: False for key in AXIS_KEYS[axis]}
        return [Variant("with_language"), Variant("no_language", off)]
    if axis == "action":
        return [Variant("with_action"), Variant("no_action", {"wm.use_action": False})]
    if axis == "time":
        return [Variant("with_time"), Variant("no_time", {"wm.use_timeshift": False})]
    if axis == "context_size":
        return [Variant(f"k{k}", {"wm.context_size": k, "uni.context_size": k}) for k in (1, 2, 4)]
    if axis == "instruction_style":
        return [Variant(f"train_{s}", {"wm.style": s, "ac.style": s, "uni.style": s}) for s in STYLES]
    if axis == "latent_vs_pixel":
        return [Variant("latent", {"wm.space": "latent"}), Variant("pixel", {"wm.space": "pixel"})]
    raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(AXIS_KEYS)}")


@dataclass
class AblationSpec:
    axis: str
    variants: List[Variant]

    def __post_init__(self) -> None:
        if self.axis not in AXIS_KEYS:
            raise ConfigError(f"unknown ablation axis {self.axis!r}; choose from {sorted(AXIS_KEYS)}")
        if not self.variants:
            raise ConfigError(f"ablation {self.axis!r} has no variants")
        allowed = set(AXIS_KEYS[self.axis])
        for variant in self.variants:
            stray = sorted(set(variant.overrides) - allowed)
            if stray:
                raise ConfigError(f"variant {variant.name!r} changes {stray} outside the {self.axis!r} axis")

    @classmethod
    def for_axis(cls, axis: str) -> "AblationSpec":
        return cls(axis, _default_variants(axis))


def variant_config(base: RunConfig, axis: str, variant: Variant) -> RunConfig:
    """The base config with only the variant's overrides applied, in its own output directory."""
    conf = OmegaConf.structured(base)
    for key, value in variant.overrides.items():
        OmegaConf.update(conf, key, value, merge=False)
    OmegaConf.update(conf, "run_id", f"{base.run_id}-{axis}-{variant.name}")
    OmegaConf.update(conf, "output_dir", str(base.run_dir / "ablations" / axis / variant.name))
    cfg: RunConfig = OmegaConf.to_object(conf)  # type: ignore[assignment]
    return validate(cfg)


def phases_for(cfg: RunConfig) -> List[str]:
    phases = []
    if "wm_ac" in cfg.eval.families:
        phases += ["wm", "ac"]
    if "uni" in cfg.eval.families:
        phases.append("uni")
    return phases


def family_rows(report: MetricsReport) -> Dict[str, Dict[str, Optional[float]]]:
    """Mean of each metric per family, pooling instruction styles."""
    pooled = MetricsReport(records=[replace(r, style="all") for r in report.records], horizon_n=report.horizon_n)
    return {row["family"]: {c: row[c] for c in DELTA_COLUMNS} for row in pooled.aggregate()}


@dataclass
class AblationReport:
    axis: str
    rows: List[Dict[str, Any]]
    provenance: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"axis": self.axis, "rows": self.rows, "provenance": self.provenance}

    def table(self) -> str:
        header = ["variant", "family", *(c.upper() for c in DELTA_COLUMNS), *(f"d{c.upper()}" for c in DELTA_COLUMNS)]
        lines = [header]
        for row in self.rows:
            cells = [row["variant"], row["family"]]
            for key in (*DELTA_COLUMNS, *(f"delta_{c}" for c in DELTA_COLUMNS)):
                v = row.get(key)
                cells.append("-" if v is None else f"{v:+.4f}" if key.startswith("delta_") else f"{v:.4f}")
            lines.append(cells)
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)) for line in lines)

    def write(self, out_dir: Path) -> Dict[str, Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"json": out_dir / "ablation.json", "table": out_dir / "ablation.txt"}
        paths["json"].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        paths["table"].write_text(f"Ablation: {self.axis}\n{self.table()}\n", encoding="utf-8")
        return paths


def delta_rows(axis: str, results: Sequence[tuple]) -> List[Dict[str, Any]]:
    """One row per (variant, family); deltas are against the first variant of the same family."""
    rows: List[Dict[str, Any]] = []
    baseline: Dict[str, Dict[str, Optional[float]]] = {}
    for variant, report in results:
        for family, metrics in family_rows(report).items():
            base = baseline.setdefault(family, metrics)
            row: Dict[str, Any] = {"axis": axis, "variant": variant.name, "family": family, **metrics}
            for c in DELTA_COLUMNS:
                a, b = metrics[c], base[c]
                row[f"delta_{c}"] = None if a is None or b is None else a - b
            rows.append(row)
    return rows


def cmd_ablate(ctx: RunContext, spec: AblationSpec, progress: bool = False) -> AblationReport:
    log = ctx.phase_log("ablate", axis=spec.axis)
    if not (ctx.data_dir / MANIFEST_NAME).is_file():
        cmd_generate(ctx, progress=progress)
    results = []
    provenance: Dict[str, Any] = {}
    for variant in spec.variants:
        cfg = variant_config(ctx.cfg, spec.axis, variant)
        sub = RunContext.open(cfg, data_dir=ctx.data_dir)
        log.info("running variant", extra={"variant": variant.name, "overrides": dict(variant.overrides)})
        for phase in phases_for(cfg):
            cmd_train(sub, phase, progress=progress)
        report = cmd_eval(sub, progress=progress)
        provenance[variant.name] = {"run_dir": str(cfg.run_dir), **sub.provenance()}
        results.append((variant, report))

    ablation = AblationReport(spec.axis, delta_rows(spec.axis, results), provenance)
    paths = ablation.write(ctx.store.path(f"ablations/{spec.axis}"))
    ctx.record_command("ablate", axis=spec.axis, variants=[v.name for v in spec.variants], report=str(paths["json"]))
    log.info("ablation written", extra={"report": str(paths["json"]), "rows": len(ablation.rows)})
    return ablation
