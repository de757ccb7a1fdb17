from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any, Dict, List, Optional


class MetricsLog:
    """Append-only JSON-lines training curve: one record per optimisation step."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, step: int, values: Dict[str, float], **context: Any) -> None:
        record = {"step": int(step), **context, **{k: float(v) for k, v in values.items()}}
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def records(self) -> List[Dict[str, Any]]:
        if not self.path.exists():
            return []
        with self.path.open("r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def truncate(self, last_step: int) -> None:
        """Drop records after ``last_step`` (used when resuming from a checkpoint)."""
        kept = [r for r in self.records() if r["step"] <= last_step]
        with self.path.open("w", encoding="utf-8") as fh:
            for record in kept:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


class Stopwatch:
    """Accumulates wall-clock time over repeated ``with`` blocks."""

    def __init__(self) -> None:
        self.total = 0.0
        self.count = 0
        self._start: Optional[float] = None

    def __enter__(self) -> "Stopwatch":
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc: Any) -> None:
        if self._start is None:
            raise RuntimeError("Stopwatch exited without entering")
        self.total += time.perf_counter() - self._start
        self.count += 1
        self._start = None

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0
