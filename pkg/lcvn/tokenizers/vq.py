"""
Patch codebook for observations.

An observation is average-pooled by ``pool`` and cut into ``patch`` x ``patch``
patches of the pooled image (D = patch * patch * 3 values each). With the
defaults a 32 x 32 image yields a 4 x 4 grid, so m = 16 tokens per frame.
The codebook is learned by k-means and frozen afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from einops import rearrange, repeat

from lcvn.errors import TokenizerError

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class Codebook:
    entries: np.ndarray
    image_size: int = 32
    pool: int = 4
    patch: int = 2
    channels: int = 3
    history: Tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] < 1:
            raise TokenizerError(f"codebook entries must be (K, D), got {entries.shape}")
        if entries.shape[1] != self.dim:
            raise TokenizerError(f"codebook dimension {entries.shape[1]} does not match patch geometry D={self.dim}")
        if not np.all(np.isfinite(entries)):
            raise TokenizerError("codebook entries must be finite")
        if self.image_size % (self.pool * self.patch):
            raise TokenizerError(
                f"image_size {self.image_size} not divisible by pool*patch={self.pool * self.patch}"
            )
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @property
    def dim(self) -> int:
        return self.patch * self.patch * self.channels

    @property
    def grid(self) -> int:
        return self.image_size // (self.pool * self.patch)

    @property
    def tokens_per_frame(self) -> int:
        return self.grid * self.grid


def patchify(obs: np.ndarray, pool: int, patch: int, image_size: Optional[int] = None) -> np.ndarray:
    """(H, W, C) or (N, H, W, C) observations -> (N * grid * grid, D) float64 patches."""
    arr = np.asarray(obs, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise TokenizerError(f"expected (H, W, C) observations, got shape {np.shape(obs)}")
    _, h, w, _ = arr.shape
    if image_size is not None and (h, w) != (image_size, image_size):
        raise TokenizerError(f"observation is {h}x{w}, codebook expects {image_size}x{image_size}")
    if h % (pool * patch) or w % (pool * patch):
        raise TokenizerError(f"observation {h}x{w} incompatible with pool={pool}, patch={patch}")
    pooled = rearrange(arr, "n (h p1) (w p2) c -> n h w c (p1 p2)", p1=pool, p2=pool).mean(axis=-1)
    return rearrange(pooled, "n (gh a) (gw b) c -> (n gh gw) (a b c)", a=patch, b=patch)


def nearest_entries(patches: np.ndarray, entries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Index of the nearest entry per row (squared distance, lowest index on ties) and that distance."""
    indices = np.empty(len(patches), dtype=np.int64)
    dists = np.empty(len(patches), dtype=np.float64)
    for start in range(0, len(patches), _CHUNK):
        chunk = patches[start : start + _CHUNK]
        d = ((chunk[:, None, :] - entries[None, :, :]) ** 2).sum(axis=-1)
        idx = np.argmin(d, axis=1)
        indices[start : start + _CHUNK] = idx
        dists[start : start + _CHUNK] = d[np.arange(len(chunk)), idx]
    return indices, dists


def train_codebook(
    observations: Sequence[np.ndarray] | np.ndarray,
    K: int,
    seed: int = 0,
    pool: int = 4,
    patch: int = 2,
    max_patches: int = 50_000,
) -> Codebook:
    """
    Lloyd k-means over observation patches, run to an assignment fixpoint or
    MAX_ITERATIONS. Centres start at K distinct patches chosen by ``seed``; an
    empty cluster keeps its previous centre. ``history`` holds the mean squared
    quantisation error of each assignment, which is non-increasing.
    """
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim == 3:
        obs = obs[None]
    if K < 1:
        raise TokenizerError(f"codebook size must be >= 1, got {K}")
    patches = patchify(obs, pool, patch)
    rng = np.random.default_rng(seed)
    if len(patches) > max_patches:
        patches = patches[np.sort(rng.choice(len(patches), size=max_patches, replace=False))]
    distinct = np.unique(patches, axis=0)
    if len(distinct) < K:
        raise TokenizerError(f"only {len(distinct)} distinct patches available for K={K}")

    centres = distinct[np.sort(rng.choice(len(distinct), size=K, replace=False))].copy()
    history: List[float] = []
    assignment: Optional[np.ndarray] = None
    for iteration in range(MAX_ITERATIONS):
        new_assignment, dists = nearest_entries(patches, centres)
        history.append(float(dists.mean()))
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for k in range(K):
            members = patches[assignment == k]
            if len(members):
                centres[k] = members.mean(axis=0)
    logger.info(
        "codebook trained",
        extra={"K": K, "iterations": len(history), "error": history[-1], "patches": len(patches)},
    )
    return Codebook(
        entries=centres,
        image_size=int(obs.shape[1]),
        pool=pool,
        patch=patch,
        channels=int(obs.shape[-1]),
        history=tuple(history),
    )


def vq_encode(obs: np.ndarray, codebook: Codebook) -> np.ndarray:
    """m token indices in raster order of the patch grid."""
    patches = patchify(obs, codebook.pool, codebook.patch, codebook.image_size)
    if patches.shape[0] != codebook.tokens_per_frame:
        raise TokenizerError("vq_encode takes a single observation")
    return nearest_entries(patches, codebook.entries)[0]


def vq_decode(tokens: Sequence[int], codebook: Codebook) -> np.ndarray:
    """Place entries back on the grid and upsample by ``pool`` (nearest neighbour)."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.shape != (codebook.tokens_per_frame,):
        raise TokenizerError(f"expected {codebook.tokens_per_frame} tokens, got shape {tokens.shape}")
    if tokens.min() < 0 or tokens.max() >= codebook.size:
        raise TokenizerError(f"visual token outside [0, {codebook.size})")
    g, p = codebook.grid, codebook.patch
    pooled = rearrange(
        codebook.entries[tokens], "(gh gw) (a b c) -> (gh a) (gw b) c", gh=g, gw=g, a=p, b=p
    )
    image = repeat(pooled, "h w c -> (h p1) (w p2) c", p1=codebook.pool, p2=codebook.pool)
    return image.astype(np.float32)
