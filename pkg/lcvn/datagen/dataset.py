"""
Dataset splits and the ``.lcvnl`` line-delimited file format.

File layout: one header record ``{"schema": "lcvnl", "version", "split",
"provenance", "dtype", "image_shape", "count"}`` followed by one JSON record per
trajectory. Observations are stored as base-16 little-endian float32 so a
read after write is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from lcvn.config import DatagenConfig
from lcvn.datagen.instructions import Instruction
from lcvn.datagen.trajectory import Trajectory, mean_step_size, sample_trajectory
from lcvn.datagen.world import Action, Landmark, Pose, WorldLayout, generate_layout
from lcvn.errors import DatasetError
from lcvn.infra.storage import LocalArtifactStore

logger = logging.getLogger(__name__)

SCHEMA = "lcvnl"
SCHEMA_VERSION = 1
MANIFEST_SCHEMA = "lcvn-manifest"
MANIFEST_NAME = "manifest.json"
SPLITS: Tuple[str, ...] = ("train", "val_seen", "val_unseen", "test")

_UNSEEN_LAYOUT_OFFSET = 50_000
_SPLIT_SEED_OFFSET = {"train": 0, "val_seen": 1_000_000, "val_unseen": 2_000_000, "test": 3_000_000}


@dataclass(frozen=True)
class SplitInfo:
    file: str
    count: int
    layout_ids: Tuple[int, ...]
    trajectory_ids: Tuple[str, ...]
    sha256: Optional[str] = None


@dataclass(frozen=True)
class DatasetManifest:
    config: Dict[str, Any]
    average_step_size: float
    seen_layouts: Tuple[int, ...]
    unseen_layouts: Tuple[int, ...]
    splits: Dict[str, SplitInfo]
    schema: str = MANIFEST_SCHEMA
    version: int = SCHEMA_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetManifest":
        if data.get("schema") != MANIFEST_SCHEMA or data.get("version") != SCHEMA_VERSION:
            raise DatasetError(
                f"unsupported manifest schema {data.get('schema')!r} version {data.get('version')!r}"
            )
        splits = {
            name: SplitInfo(
                file=info["file"],
                count=int(info["count"]),
                layout_ids=tuple(info["layout_ids"]),
                trajectory_ids=tuple(info["trajectory_ids"]),
                sha256=info.get("sha256"),
            )
            for name, info in data["splits"].items()
        }
        return cls(
            config=dict(data["config"]),
            average_step_size=float(data["average_step_size"]),
            seen_layouts=tuple(data["seen_layouts"]),
            unseen_layouts=tuple(data["unseen_layouts"]),
            splits=splits,
        )


@dataclass
class Dataset:
    manifest: DatasetManifest
    splits: Dict[str, List[Trajectory]]
    layouts: Dict[int, WorldLayout] = field(default_factory=dict)

    def split(self, name: str) -> List[Trajectory]:
        if name not in self.splits:
            raise DatasetError(f"dataset has no split {name!r}; available: {sorted(self.splits)}")
        return self.splits[name]

    @property
    def average_step_size(self) -> float:
        return self.manifest.average_step_size


def check_splits(manifest: DatasetManifest) -> None:
    """Raise DatasetError if seen/unseen layouts or train/val_seen trajectories overlap."""
    shared = set(manifest.seen_layouts) & set(manifest.unseen_layouts)
    if shared:
        raise DatasetError(f"layout ids {sorted(shared)} are both seen and unseen")
    splits = manifest.splits
    if "train" in splits and "val_unseen" in splits:
        overlap = set(splits["train"].layout_ids) & set(splits["val_unseen"].layout_ids)
        if overlap:
            raise DatasetError(f"layout ids {sorted(overlap)} appear in both train and val_unseen")
    if "train" in splits and "val_seen" in splits:
        overlap_t = set(splits["train"].trajectory_ids) & set(splits["val_seen"].trajectory_ids)
        if overlap_t:
            raise DatasetError(f"trajectory ids {sorted(overlap_t)[:5]} appear in both train and val_seen")


def _layout_seeds(cfg: DatagenConfig) -> Tuple[List[int], List[int]]:
    base = int(cfg.seed) * 100_000
    seen = [base + i for i in range(cfg.layouts_seen)]
    unseen = [base + _UNSEEN_LAYOUT_OFFSET + i for i in range(cfg.layouts_unseen)]
    return seen, unseen


def _split_layouts(split: str, seen: List[WorldLayout], unseen: List[WorldLayout]) -> List[WorldLayout]:
    if split in ("train", "val_seen"):
        return seen
    if split == "val_unseen":
        return unseen
    # test mixes both environments
    mixed: List[WorldLayout] = []
    for i in range(max(len(seen), len(unseen))):
        if i < len(seen):
            mixed.append(seen[i])
        if i < len(unseen):
            mixed.append(unseen[i])
    return mixed


def build_dataset(cfg: DatagenConfig, progress: bool = False) -> Dataset:
    """Generate every split described by ``cfg``; a pure function of the config."""
    counts = {"train": cfg.train, "val_seen": cfg.val_seen, "val_unseen": cfg.val_unseen, "test": cfg.test}
    if counts["val_unseen"] and cfg.layouts_unseen < 1:
        raise DatasetError("val_unseen requires layouts_unseen >= 1")
    if (counts["train"] or counts["val_seen"]) and cfg.layouts_seen < 1:
        raise DatasetError("train/val_seen require layouts_seen >= 1")

    bounds = (float(cfg.width), float(cfg.height))
    seen_seeds, unseen_seeds = _layout_seeds(cfg)
    seen = [generate_layout(s, cfg.n_landmarks, bounds, reserved=False) for s in seen_seeds]
    unseen = [generate_layout(s, cfg.n_landmarks, bounds, reserved=True) for s in unseen_seeds]
    layouts = {layout.layout_id: layout for layout in seen + unseen}

    raw: Dict[str, List[Trajectory]] = {}
    for split in SPLITS:
        pool = _split_layouts(split, seen, unseen)
        trajs: List[Trajectory] = []
        for j in tqdm(range(counts[split]), desc=f"generate {split}", disable=not progress):
            layout = pool[j % len(pool)]
            seed = _SPLIT_SEED_OFFSET[split] + j
            trajs.append(
                sample_trajectory(
                    layout,
                    seed,
                    cfg.max_len,
                    image_size=cfg.image_size,
                    step_range=(cfg.step_min, cfg.step_max),
                )
            )
        raw[split] = trajs

    reference = raw["train"] or [t for split in SPLITS for t in raw[split]]
    step = mean_step_size(reference) if reference else 1.0
    splits = {name: [t.with_step_size(step) for t in trajs] for name, trajs in raw.items()}

    manifest = DatasetManifest(
        config=asdict(cfg),
        average_step_size=step,
        seen_layouts=tuple(seen_seeds),
        unseen_layouts=tuple(unseen_seeds),
        splits={name: _split_info(name, trajs) for name, trajs in splits.items()},
    )
    check_splits(manifest)
    logger.info(
        "dataset built",
        extra={"counts": counts, "average_step_size": step, "layouts": len(layouts)},
    )
    return Dataset(manifest=manifest, splits=splits, layouts=layouts)


def _split_info(name: str, trajs: Sequence[Trajectory], sha256: Optional[str] = None) -> SplitInfo:
    return SplitInfo(
        file=f"{name}.{SCHEMA}",
        count=len(trajs),
        layout_ids=tuple(sorted({t.layout_id for t in trajs})),
        trajectory_ids=tuple(t.trajectory_id for t in trajs),
        sha256=sha256,
    )


# --- record codec -----------------------------------------------------------


def _landmark_record(lm: Optional[Landmark]) -> Optional[Dict[str, Any]]:
    if lm is None:
        return None
    return {"id": lm.id, "position": list(lm.position), "color_index": lm.color_index, "name": lm.name}


def _landmark_from(data: Optional[Dict[str, Any]]) -> Optional[Landmark]:
    if data is None:
        return None
    return Landmark(
        id=int(data["id"]),
        position=(float(data["position"][0]), float(data["position"][1])),
        color_index=int(data["color_index"]),
        name=str(data["name"]),
    )


def trajectory_to_record(traj: Trajectory) -> Dict[str, Any]:
    obs = np.ascontiguousarray(traj.observations, dtype="<f4")
    return {
        "trajectory_id": traj.trajectory_id,
        "layout_id": traj.layout_id,
        "seed": traj.seed,
        "poses": [[p.x, p.y, p.yaw] for p in traj.poses],
        "actions": [[a.dx, a.dy, a.dyaw, a.is_stop] for a in traj.actions],
        "observations": obs.tobytes().hex(),
        "instructions": {
            style: {"tokens": list(ins.tokens), "text": ins.text} for style, ins in traj.instructions.items()
        },
        "average_step_size": traj.average_step_size,
        "goal": _landmark_record(traj.goal),
        "en_route": _landmark_record(traj.en_route),
        "scene": list(traj.scene),
        "provenance": traj.provenance,
    }


def trajectory_from_record(record: Dict[str, Any], image_shape: Sequence[int]) -> Trajectory:
    try:
        poses = tuple(Pose(float(x), float(y), float(yaw)) for x, y, yaw in record["poses"])
        actions = tuple(
            Action(dx=float(dx), dy=float(dy), dyaw=float(dyaw), is_stop=bool(stop))
            for dx, dy, dyaw, stop in record["actions"]
        )
        buf = bytes.fromhex(record["observations"])
        observations = np.frombuffer(buf, dtype="<f4").astype(np.float32).reshape(len(poses), *image_shape)
        instructions = {
            style: Instruction(style=style, tokens=tuple(int(t) for t in ins["tokens"]), text=ins["text"])
            for style, ins in record["instructions"].items()
        }
        return Trajectory(
            layout_id=int(record["layout_id"]),
            trajectory_id=str(record["trajectory_id"]),
            seed=int(record["seed"]),
            poses=poses,
            actions=actions,
            observations=observations,
            instructions=instructions,
            average_step_size=float(record["average_step_size"]),
            goal=_landmark_from(record.get("goal")),
            en_route=_landmark_from(record.get("en_route")),
            scene=tuple(record.get("scene", ())),
            provenance=str(record.get("provenance", "generated")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed trajectory record {record.get('trajectory_id')!r}: {exc}") from exc


def encode_trajectories(trajs: Sequence[Trajectory], split: str, provenance: str = "generated") -> bytes:
    shape = list(trajs[0].observations.shape[1:]) if trajs else []
    header = {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "split": split,
        "provenance": provenance,
        "dtype": "float32",
        "image_shape": shape,
        "count": len(trajs),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(trajectory_to_record(t), sort_keys=True) for t in trajs)
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_trajectories(data: bytes) -> Tuple[Dict[str, Any], List[Trajectory]]:
    lines = [line for line in data.decode("utf-8").splitlines() if line.strip()]
    if not lines:
        raise DatasetError("empty trajectory file")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA or header.get("version") != SCHEMA_VERSION:
        raise DatasetError(f"unsupported file schema {header.get('schema')!r} version {header.get('version')!r}")
    trajs = [trajectory_from_record(json.loads(line), header["image_shape"]) for line in lines[1:]]
    if len(trajs) != header.get("count"):
        raise DatasetError(f"header announces {header.get('count')} trajectories, found {len(trajs)}")
    return header, trajs


def write_trajectories(path: Union[str, Path], trajs: Sequence[Trajectory], split: str, provenance: str = "generated") -> str:
    """Write a single ``.lcvnl`` file; returns its SHA-256."""
    path = Path(path)
    store = LocalArtifactStore(path.parent)
    store.put_bytes(path.name, encode_trajectories(trajs, split, provenance))
    return store.sha256(path.name)


def read_trajectories(path: Union[str, Path]) -> List[Trajectory]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"trajectory file not found: {path}")
    return decode_trajectories(path.read_bytes())[1]


def write_dataset(dataset: Dataset, directory: Union[str, Path]) -> DatasetManifest:
    """Write every split plus ``manifest.json``; returns the manifest with file checksums."""
    store = LocalArtifactStore(Path(directory))
    infos: Dict[str, SplitInfo] = {}
    for name, trajs in dataset.splits.items():
        data = encode_trajectories(trajs, name)
        key = f"{name}.{SCHEMA}"
        store.put_bytes(key, data)
        infos[name] = _split_info(name, trajs, hashlib.sha256(data).hexdigest())
    manifest = DatasetManifest(
        config=dataset.manifest.config,
        average_step_size=dataset.manifest.average_step_size,
        seen_layouts=dataset.manifest.seen_layouts,
        unseen_layouts=dataset.manifest.unseen_layouts,
        splits=infos,
    )
    store.put_bytes(MANIFEST_NAME, json.dumps(manifest.to_dict(), indent=2, sort_keys=True).encode("utf-8"))
    dataset.manifest = manifest
    logger.info("dataset written", extra={"directory": str(directory), "splits": sorted(infos)})
    return manifest


def read_manifest(directory: Union[str, Path]) -> DatasetManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise DatasetError(f"no dataset manifest at {path}")
    return DatasetManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))


def read_dataset(directory: Union[str, Path], splits: Optional[Iterable[str]] = None) -> Dataset:
    """Read a dataset written by :func:`write_dataset`, verifying split checksums."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    check_splits(manifest)
    wanted = list(splits) if splits is not None else list(manifest.splits)
    loaded: Dict[str, List[Trajectory]] = {}
    for name in wanted:
        info = manifest.splits.get(name)
        if info is None:
            raise DatasetError(f"manifest has no split {name!r}")
        data = (directory / info.file).read_bytes()
        if info.sha256 is not None and hashlib.sha256(data).hexdigest() != info.sha256:
            raise DatasetError(f"checksum mismatch for {info.file}")
        loaded[name] = decode_trajectories(data)[1]

    cfg = manifest.config
    bounds = (float(cfg["width"]), float(cfg["height"]))
    layouts = {s: generate_layout(s, int(cfg["n_landmarks"]), bounds, reserved=False) for s in manifest.seen_layouts}
    layouts.update(
        {s: generate_layout(s, int(cfg["n_landmarks"]), bounds, reserved=True) for s in manifest.unseen_layouts}
    )
    return Dataset(manifest=manifest, splits=loaded, layouts=layouts)
