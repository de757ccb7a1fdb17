"""Per-trajectory records, aggregate tables and plots for navigation and imagination evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

NAVIGATION_COLUMNS = ("ate", "rpe", "sr")
IMAGINATION_COLUMNS = ("ssim", "psnr", "ssim_at_n", "psnr_at_n", "dreamsim", "dreamsim_at_n")
LATENCY_COLUMN = "latency_s"


@dataclass
class TrajectoryRecord:
    trajectory_id: str
    family: str
    style: str
    split: str
    steps: int = 0
    stopped: bool = False
    final_distance: Optional[float] = None
    success: Optional[bool] = None
    ate: Optional[float] = None
    rpe: Optional[float] = None
    ssim: Optional[float] = None
    psnr: Optional[float] = None
    ssim_at_n: Optional[float] = None
    psnr_at_n: Optional[float] = None
    dreamsim: Optional[float] = None
    dreamsim_at_n: Optional[float] = None
    latency_s: Optional[float] = None
    ssim_curve: List[float] = field(default_factory=list)
    psnr_curve: List[float] = field(default_factory=list)

    @property
    def sr(self) -> Optional[float]:
        return None if self.success is None else float(self.success)


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(kept)) if kept else None


def _curve_mean(curves: Sequence[List[float]]) -> List[float]:
    curves = [c for c in curves if c]
    if not curves:
        return []
    return [float(v) for v in np.mean(np.array(curves, dtype=np.float64), axis=0)]


@dataclass
class MetricsReport:
    records: List[TrajectoryRecord]
    horizon_n: int
    config: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    embedder: str = ""

    def groups(self) -> Dict[Tuple[str, str], List[TrajectoryRecord]]:
        out: Dict[Tuple[str, str], List[TrajectoryRecord]] = {}
        for r in self.records:
            out.setdefault((r.family, r.style), []).append(r)
        return dict(sorted(out.items()))

    def aggregate(self) -> List[Dict[str, Any]]:
        """One row per (family, style): means over trajectories of every metric."""
        rows = []
        for (family, style), recs in self.groups().items():
            row: Dict[str, Any] = {"family": family, "style": style, "count": len(recs)}
            row["sr"] = _mean([r.sr for r in recs])
            for col in ("ate", "rpe", *IMAGINATION_COLUMNS, LATENCY_COLUMN):
                row[col] = _mean([getattr(r, col) for r in recs])
            row["ssim_curve"] = _curve_mean([r.ssim_curve for r in recs])
            row["psnr_curve"] = _curve_mean([r.psnr_curve for r in recs])
            rows.append(row)
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "horizon_n": self.horizon_n,
            "aggregate": self.aggregate(),
            "records": [asdict(r) for r in self.records],
            "counts": dict(sorted(self.counts.items())),
            "embedder": self.embedder,
            "config": self.config,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsReport":
        return cls(
            records=[TrajectoryRecord(**r) for r in data.get("records", [])],
            horizon_n=int(data["horizon_n"]),
            config=data.get("config", {}),
            provenance=data.get("provenance", {}),
            counts=data.get("counts", {}),
            embedder=data.get("embedder", ""),
        )

    @classmethod
    def read(cls, path: Path) -> "MetricsReport":
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def table(self, columns: Sequence[str] = NAVIGATION_COLUMNS + IMAGINATION_COLUMNS) -> str:
        """Fixed-width text table; navigation columns in ATE, RPE, SR order."""
        header = ["family", "style", "count", *(c.replace("_at_n", f"@{self.horizon_n}").upper() for c in columns)]
        lines = [header]
        for row in self.aggregate():
            cells = [row["family"], row["style"], str(row["count"])]
            for c in columns:
                v = row[c]
                cells.append("-" if v is None else f"{v:.4f}")
            lines.append(cells)
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)) for line in lines)

    def write(self, out_dir: Path, name: str = "report") -> Dict[str, Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"json": out_dir / f"{name}.json", "table": out_dir / f"{name}.txt"}
        paths["json"].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        text = "Navigation\n" + self.table(NAVIGATION_COLUMNS) + "\n\nImagination\n" + self.table(IMAGINATION_COLUMNS)
        if self.embedder:
            text += f"\n\nDreamSim embedders: {self.embedder}"
        paths["table"].write_text(text + "\n", encoding="utf-8")
        return paths


def plot_paths(
    predicted: Sequence[Tuple[float, float]],
    reference: Sequence[Tuple[float, float]],
    path: Path,
    title: str = "",
    goal: Optional[Tuple[float, float]] = None,
) -> Path:
    """Overhead view of a predicted path against the ground-truth path."""
    fig, ax = plt.subplots(figsize=(4, 4))
    ref = np.asarray(reference, dtype=np.float64).reshape(-1, 2)
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    ax.plot(ref[:, 0], ref[:, 1], "-", color="black", label="ground truth")
    ax.plot(pred[:, 0], pred[:, 1], "--", color="tab:blue", label="predicted")
    ax.scatter(ref[:1, 0], ref[:1, 1], color="tab:green", zorder=3, label="start")
    if goal is not None:
        ax.scatter([goal[0]], [goal[1]], color="tab:red", marker="*", s=80, zorder=3, label="goal")
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=7)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", dpi=100)
    plt.close(fig)
    return path


def plot_horizon_curves(report: MetricsReport, path: Path, metric: str = "ssim") -> Path:
    """Mean metric@h against h for every (family, style) group with a curve."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for row in report.aggregate():
        curve = row[f"{metric}_curve"]
        if curve:
            ax.plot(range(1, len(curve) + 1), curve, marker="o", label=f"{row['family']}/{row['style']}")
    ax.set_xlabel("horizon n")
    ax.set_ylabel(f"{metric.upper()}@n")
    if ax.has_data():
        ax.legend(fontsize=7)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", dpi=100)
    plt.close(fig)
    return path
