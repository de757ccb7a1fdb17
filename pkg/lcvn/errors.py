from __future__ import annotations

from typing import Any, Dict, Optional


class LCVNError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(LCVNError):
    """Invalid or inconsistent run configuration."""


class DatasetError(LCVNError):
    """Malformed dataset file, schema mismatch or split overlap."""


class GenerationError(LCVNError):
    """A synthetic world, trajectory or observation could not be generated."""


class TokenizerError(LCVNError):
    """Out-of-vocabulary word, out-of-range token or incompatible geometry."""


class ShapeError(LCVNError):
    """Tensor shape does not match the model contract."""


class TrainingError(LCVNError):
    """Training produced an unusable state (e.g. a non-finite loss)."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({details})"


class FrozenModelError(LCVNError):
    """A model that must stay frozen changed its parameters."""


class BudgetError(LCVNError):
    """A token sequence does not fit the context budget."""


class MetricError(LCVNError):
    """Metric inputs are empty or mismatched."""


class PrerequisiteError(LCVNError):
    """A required artifact (checkpoint, dataset) is missing."""


class StorageError(LCVNError):
    """Generic artifact storage error."""


class NotFoundError(StorageError):
    """Raised when an artifact is not found in storage."""


class CheckpointError(LCVNError):
    """Checkpoint header, version or checksum is invalid."""
