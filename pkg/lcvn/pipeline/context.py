"""
Run context shared by every pipeline command: the resolved config, the
artifact store rooted at the run directory, a structured logger, and the run
manifest that records what each command consumed and produced.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from lcvn import __version__
from lcvn.config import RunConfig, config_hash, save_run_config, to_dict
from lcvn.errors import PrerequisiteError
from lcvn.infra.storage import LocalArtifactStore
from lcvn.monitoring.logging import StructuredLoggerAdapter, add_structured_context

logger = logging.getLogger(__name__)

DATA_DIR = "data"
MANIFEST_KEY = "manifest.json"
CONFIG_KEY = "config.yaml"
CHECKPOINTS = {
    "vae": "checkpoints/vae.ckpt",
    "wm": "checkpoints/wm.ckpt",
    "ac": "checkpoints/ac.ckpt",
    "tokenizers": "checkpoints/tokenizers.ckpt",
    "uni": "checkpoints/uni.ckpt",
}


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def curve_key(phase: str) -> str:
    return f"curves/{phase}.jsonl"


@dataclass
class RunContext:
    cfg: RunConfig
    store: LocalArtifactStore
    data_dir: Path
    log: StructuredLoggerAdapter
    manifest: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def open(cls, cfg: RunConfig, data_dir: Optional[Path] = None) -> "RunContext":
        """Create or reopen the run directory and echo the resolved config into it."""
        store = LocalArtifactStore(cfg.run_dir)
        save_run_config(cfg, store.path(CONFIG_KEY))
        log = add_structured_context(logger, run_id=cfg.run_id, seed=cfg.seed)
        ctx = cls(cfg=cfg, store=store, data_dir=data_dir or store.root / DATA_DIR, log=log)
        ctx.manifest = ctx._load_manifest()
        ctx.manifest.update(
            {
                "run_id": cfg.run_id,
                "package_version": __version__,
                "config": to_dict(cfg),
                "config_hash": config_hash(cfg),
                "data_dir": str(ctx.data_dir),
            }
        )
        ctx.manifest.setdefault("commands", [])
        ctx.manifest.setdefault("checkpoints", {})
        ctx.manifest.setdefault("inputs", {})
        return ctx

    def _load_manifest(self) -> Dict[str, Any]:
        if self.store.exists(MANIFEST_KEY):
            return json.loads(self.store.get_bytes(MANIFEST_KEY))
        return {}

    def phase_log(self, phase: str, **extra: Any) -> StructuredLoggerAdapter:
        return self.log.bind(phase=phase, **extra)

    def checkpoint_path(self, name: str) -> Path:
        return self.store.path(CHECKPOINTS[name])

    def require_checkpoint(self, name: str) -> Path:
        key = CHECKPOINTS[name]
        if not self.store.exists(key):
            raise PrerequisiteError(f"missing {name} checkpoint: {self.store.root / key}")
        return self.store.path(key)

    def record_checkpoint(self, name: str) -> str:
        digest = self.store.sha256(CHECKPOINTS[name])
        self.manifest["checkpoints"][name] = {"key": CHECKPOINTS[name], "sha256": digest}
        return digest

    def record_input(self, name: str, sha256: str) -> None:
        self.manifest["inputs"][name] = sha256

    def record_command(self, command: str, **details: Any) -> None:
        """Append a provenance entry and rewrite the manifest."""
        entry = {"command": command, "finished_at": datetime.now(timezone.utc).isoformat(), **details}
        self.manifest["commands"].append(entry)
        self.save_manifest()

    def save_manifest(self) -> None:
        self.store.put_bytes(MANIFEST_KEY, json.dumps(self.manifest, indent=2, sort_keys=True).encode("utf-8"))

    def provenance(self) -> Dict[str, Any]:
        """What a report consumed: config hash, dataset checksums and checkpoint checksums."""
        return {
            "config_hash": self.manifest.get("config_hash"),
            "inputs": dict(self.manifest.get("inputs", {})),
            "checkpoints": dict(self.manifest.get("checkpoints", {})),
        }
