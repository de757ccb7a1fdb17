from __future__ import annotations

import hashlib
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from lcvn.errors import NotFoundError, StorageError

"""
lcvn/infra/storage.py

Artifact storage used by the pipeline: datasets, checkpoints, metric logs,
reports and plots of a run all live under one store root (the run directory).
Keys are POSIX-style relative paths, e.g. ``data/train.lcvnl`` or
``checkpoints/wm.ckpt``.
"""


class ArtifactStore(ABC):
    """Abstract artifact store interface."""

    @abstractmethod
    def put_bytes(self, key: str, data: bytes) -> str:
        """Store bytes under ``key``; return a path or URI for the stored object."""
        raise NotImplementedError

    @abstractmethod
    def get_bytes(self, key: str) -> bytes:
        """Return the bytes of ``key``. Raises NotFoundError if missing."""
        raise NotImplementedError

    @abstractmethod
    def delete(self, key: str) -> None:
        raise NotImplementedError

    @abstractmethod
    def list_keys(self, prefix: Optional[str] = None) -> Iterable[str]:
        """Yield keys under the optional prefix, in sorted order."""
        raise NotImplementedError

    @abstractmethod
    def path(self, key: str) -> Path:
        """Local filesystem path of ``key`` (parent directories are created)."""
        raise NotImplementedError

    def exists(self, key: str) -> bool:
        try:
            self.get_bytes(key)
        except NotFoundError:
            return False
        return True

    def sha256(self, key: str) -> str:
        return hashlib.sha256(self.get_bytes(key)).hexdigest()


@dataclass
class LocalArtifactStore(ArtifactStore):
    """
    Filesystem store rooted at a run directory.

    root: directory where artifacts are stored; created if missing.
    """

    root: Path

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path_for(self, key: str) -> Path:
        candidate = (self.root / key).resolve()
        root = self.root.resolve()
        if candidate != root and root not in candidate.parents:
            raise StorageError(f"Invalid key {key!r}: attempted path traversal")
        return candidate

    def put_bytes(self, key: str, data: bytes) -> str:
        p = self._path_for(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        with tmp.open("wb") as fh:
            fh.write(data)
        os.replace(tmp, p)
        return str(p)

    def get_bytes(self, key: str) -> bytes:
        p = self._path_for(key)
        if not p.is_file():
            raise NotFoundError(f"Artifact not found: {key}")
        return p.read_bytes()

    def exists(self, key: str) -> bool:
        return self._path_for(key).is_file()

    def delete(self, key: str) -> None:
        p = self._path_for(key)
        try:
            p.unlink()
        except FileNotFoundError:
            raise NotFoundError(f"Artifact not found: {key}")

    def list_keys(self, prefix: Optional[str] = None) -> Iterable[str]:
        keys = []
        for p in self.root.rglob("*"):
            if p.is_file():
                rel = p.relative_to(self.root).as_posix()
                if prefix is None or rel.startswith(prefix):
                    keys.append(rel)
        yield from sorted(keys)

    def path(self, key: str) -> Path:
        p = self._path_for(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

