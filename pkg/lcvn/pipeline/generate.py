from __future__ import annotations

from typing import Iterable, List, Optional

from lcvn.datagen.dataset import (
    MANIFEST_NAME,
    Dataset,
    DatasetManifest,
    build_dataset,
    read_dataset,
    read_manifest,
    write_dataset,
)
from lcvn.errors import PrerequisiteError
from lcvn.pipeline.context import RunContext


def cmd_generate(ctx: RunContext, progress: bool = True) -> DatasetManifest:
    """Build every split from ``cfg.datagen`` and write it under the run's data directory."""
    log = ctx.phase_log("generate")
    log.info("generating dataset", extra={"datagen": ctx.manifest["config"]["datagen"]})
    dataset = build_dataset(ctx.cfg.datagen, progress=progress)
    manifest = write_dataset(dataset, ctx.data_dir)
    for name, info in manifest.splits.items():
        ctx.record_input(f"data/{name}", info.sha256 or "")
    ctx.record_command(
        "generate",
        splits={name: info.count for name, info in manifest.splits.items()},
        average_step_size=manifest.average_step_size,
    )
    log.info("dataset written", extra={"dir": str(ctx.data_dir), "average_step_size": manifest.average_step_size})
    return manifest


def load_dataset(ctx: RunContext, splits: Optional[Iterable[str]] = None) -> Dataset:
    """Read (and checksum-verify) the run's dataset; PrerequisiteError if it was never generated."""
    if not (ctx.data_dir / MANIFEST_NAME).is_file():
        raise PrerequisiteError(f"missing dataset: {ctx.data_dir / MANIFEST_NAME} (run `generate` first)")
    wanted: List[str] = list(splits) if splits is not None else list(read_manifest(ctx.data_dir).splits)
    dataset = read_dataset(ctx.data_dir, wanted)
    for name in wanted:
        ctx.record_input(f"data/{name}", dataset.manifest.splits[name].sha256 or "")
    return dataset
