"""
Open-loop imagination metrics: metric@n under ground-truth actions, and the
DreamSim-style image/instruction consistency score with pluggable embedders.
"""

from __future__ import annotations

from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import torch

from lcvn.config import UniConfig
from lcvn.datagen.trajectory import Trajectory
from lcvn.errors import MetricError
from lcvn.tokenizers import vq
from lcvn.tokenizers.space import TokenSpace
from lcvn.tokenizers.vq import Codebook
from lcvn.uni.inference import uni_imagine
from lcvn.uni.model import UniTransformer
from lcvn.worldmodel.codec import StateCodec, as_observation_tensor
from lcvn.worldmodel.embedders import InstructionEmbedder
from lcvn.worldmodel.model import WorldModel
from lcvn.worldmodel.vae import VAE

ImageMetric = Callable[[np.ndarray, np.ndarray], float]
Embedder = Callable[[np.ndarray], np.ndarray]

DEFAULT_HORIZON = 8


class Imaginer(Protocol):
    def imagine(self, traj: Trajectory, style: str, n: int) -> List[np.ndarray]:
        """Predicted observations o_1..o_n from o_0 under the trajectory's own actions."""


class OracleImaginer:
    """Returns the ground truth; metric@n of a perfect model."""

    def imagine(self, traj: Trajectory, style: str, n: int) -> List[np.ndarray]:
        return [np.asarray(o) for o in traj.observations[1 : n + 1]]


class WorldModelImaginer:
    def __init__(self, wm: WorldModel, codec: StateCodec, timeshift: int = 1, steps: int = 8, seed: int = 0) -> None:
        self.wm = wm
        self.codec = codec
        self.timeshift = timeshift
        self.steps = steps
        self.seed = seed

    @torch.no_grad()
    def imagine(self, traj: Trajectory, style: str, n: int) -> List[np.ndarray]:
        self.wm.eval()
        start = self.codec.encode(as_observation_tensor(traj.observations[0]))
        actions = torch.as_tensor(traj.action_array()[:n], dtype=start.dtype).unsqueeze(0)
        ids = self.wm.instructions.batch_tokens([traj.instructions[style].tokens])
        latents = self.wm.rollout_latents(start, actions, ids, self.timeshift, self.steps, self.seed)
        frames = self.codec.decode(latents[0])
        return [f.detach().cpu().numpy().astype(np.float32) for f in frames]


class UniImaginer:
    def __init__(self, model: UniTransformer, space: TokenSpace, codebook: Codebook, cfg: UniConfig) -> None:
        self.model = model
        self.space = space
        self.codebook = codebook
        self.cfg = cfg

    def imagine(self, traj: Trajectory, style: str, n: int) -> List[np.ndarray]:
        codes = uni_imagine(
            self.model,
            self.space,
            self.codebook,
            traj.observations[0],
            traj.instructions[style].tokens,
            traj.actions[:n],
            self.cfg,
        )
        return [vq.vq_decode(c, self.codebook) for c in codes]


def metric_curve(
    imaginer: Imaginer, traj: Trajectory, style: str, n: int, metric: ImageMetric
) -> Optional[List[float]]:
    """metric@1..metric@n from one rollout; None when the trajectory has fewer than n actions."""
    if traj.n < n:
        return None
    frames = imaginer.imagine(traj, style, n)
    return [metric(traj.observations[h], frames[h - 1]) for h in range(1, n + 1)]


def metric_at_n(
    imaginer: Imaginer, traj: Trajectory, n: int, metric: ImageMetric, style: str = "concise"
) -> Optional[float]:
    """metric(o_n, o_hat_n) under recursive prediction; None when the trajectory is too short."""
    if n < 1:
        raise MetricError(f"horizon must be >= 1, got {n}")
    curve = metric_curve(imaginer, traj, style, n, metric)
    return None if curve is None else curve[-1]


def dreamsim_terms(
    images: Sequence[np.ndarray], instruction: Sequence[int], image_embedder: Embedder, text_embedder: Embedder
) -> Tuple[np.ndarray, int]:
    """Per-image cosine to the instruction embedding and the number of zero-norm terms (scored 0)."""
    if not images:
        raise MetricError("DreamSim over an empty image list")
    text = np.asarray(text_embedder(np.asarray(instruction)), dtype=np.float64)
    terms = []
    zero = 0
    for image in images:
        emb = np.asarray(image_embedder(image), dtype=np.float64)
        if emb.shape != text.shape:
            raise MetricError(f"embedding dims differ: image {emb.shape} vs text {text.shape}")
        denom = np.linalg.norm(emb) * np.linalg.norm(text)
        if denom == 0.0:
            zero += 1
            terms.append(0.0)
        else:
            terms.append(float(emb @ text / denom))
    return np.asarray(terms), zero


def dreamsim_score(
    images: Sequence[np.ndarray], instruction: Sequence[int], image_embedder: Embedder, text_embedder: Embedder
) -> float:
    terms, _ = dreamsim_terms(images, instruction, image_embedder, text_embedder)
    return float(terms.mean())


class LatentEmbedders:
    """
    Default embedders: VAE encoder mean for images, pooled instruction
    embedding for text, each mapped to ``dim`` by a fixed seeded projection.
    """

    description = "VAE-mean / instruction-embedder with fixed random projections"

    def __init__(self, vae: VAE, instructions: InstructionEmbedder, dim: int = 16, seed: int = 0) -> None:
        self.vae = vae
        self.instructions = instructions
        g = torch.Generator().manual_seed(seed)
        self.image_proj = torch.randn(vae.latent_dim, dim, generator=g) / vae.latent_dim**0.5
        self.text_proj = torch.randn(instructions.dim, dim, generator=g) / instructions.dim**0.5

    @torch.no_grad()
    def image(self, obs: np.ndarray) -> np.ndarray:
        mean, _ = self.vae.encode(as_observation_tensor(obs))
        return (mean[0] @ self.image_proj).numpy()

    @torch.no_grad()
    def text(self, instruction: np.ndarray) -> np.ndarray:
        ids = self.instructions.batch_tokens([list(np.asarray(instruction).tolist())])
        return (self.instructions.pooled(ids)[0] @ self.text_proj).numpy()
