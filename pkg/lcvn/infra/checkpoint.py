from __future__ import annotations

import hashlib
import io
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import torch
from torch import nn

from lcvn.errors import CheckpointError, FrozenModelError

FORMAT = "lcvn-ckpt"
VERSION = 1

StateLike = Union[nn.Module, Mapping[str, Any]]


def _tensor_bytes(value: Any) -> bytes:
    if isinstance(value, torch.Tensor):
        return value.detach().cpu().contiguous().numpy().tobytes()
    if isinstance(value, np.ndarray):
        return np.ascontiguousarray(value).tobytes()
    return repr(value).encode("utf-8")


def state_checksum(state: StateLike) -> str:
    """SHA-256 over parameter names and raw bytes, in sorted name order."""
    if isinstance(state, nn.Module):
        state = state.state_dict()
    digest = hashlib.sha256()
    for name in sorted(state):
        digest.update(name.encode("utf-8"))
        digest.update(_tensor_bytes(state[name]))
    return digest.hexdigest()


class FrozenGuard:
    """Remembers a module's checksum and verifies it is unchanged."""

    def __init__(self, module: nn.Module, name: str) -> None:
        self.module = module
        self.name = name
        self.checksum = state_checksum(module)

    def verify(self) -> None:
        current = state_checksum(self.module)
        if current != self.checksum:
            raise FrozenModelError(
                f"{self.name} parameters changed while frozen "
                f"(expected {self.checksum[:12]}, found {current[:12]})"
            )


def save_checkpoint(
    path: Union[str, Path],
    kind: str,
    states: Mapping[str, Mapping[str, Any]],
    config: Optional[Mapping[str, Any]] = None,
    extra: Optional[Mapping[str, Any]] = None,
) -> str:
    """
    Write a versioned container holding named state dicts.

    Returns the SHA-256 of the written file.
    """
    payload = {
        "header": {"format": FORMAT, "version": VERSION, "kind": kind},
        "config": dict(config or {}),
        "states": {name: dict(state) for name, state in states.items()},
        "checksums": {name: state_checksum(state) for name, state in states.items()},
        "extra": dict(extra or {}),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    data = buffer.getvalue()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path: Union[str, Path], expected_kind: Optional[str] = None) -> Dict[str, Any]:
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    header = payload.get("header", {}) if isinstance(payload, dict) else {}
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an {FORMAT} container")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path} has version {header.get('version')}, expected {VERSION}")
    if expected_kind is not None and header.get("kind") != expected_kind:
        raise CheckpointError(f"{path} holds {header.get('kind')!r}, expected {expected_kind!r}")
    for name, state in payload["states"].items():
        if state_checksum(state) != payload["checksums"].get(name):
            raise CheckpointError(f"checksum mismatch for state {name!r} in {path}")
    return payload
