from typing import Callable, List

import numpy as np
import pytest
import torch

from lcvn.config import RunConfig, load_run_config
from lcvn.datagen.dataset import Dataset, build_dataset

# small enough that every phase trains in a few seconds on CPU
TINY_OVERRIDES: List[str] = [
    "run_id=tiny",
    "log_every=1",
    "checkpoint_every=2",
    "datagen.image_size=16",
    "datagen.train=6",
    "datagen.val_seen=2",
    "datagen.val_unseen=2",
    "datagen.test=2",
    "datagen.layouts_seen=2",
    "datagen.layouts_unseen=1",
    "vae.latent_dim=8",
    "vae.channels=[8,8]",
    "vae.steps=3",
    "vae.batch_size=8",
    "vae.warmup_steps=1",
    "wm.width=16",
    "wm.depth=1",
    "wm.heads=2",
    "wm.instr_dim=16",
    "wm.levels=8",
    "wm.sampler_steps=2",
    "wm.batch_size=4",
    "wm.steps=4",
    "wm.warmup_steps=1",
    "ac.hidden=16",
    "ac.plan_dim=4",
    "ac.align_dim=4",
    "ac.horizon=3",
    "ac.batch_size=2",
    "ac.steps=2",
    "ac.warmup_steps=1",
    "uni.depth=1",
    "uni.width=16",
    "uni.heads=2",
    "uni.codebook_size=4",
    "uni.batch_size=2",
    "uni.steps=2",
    "uni.warmup_steps=1",
    "eval.t_max=4",
    "eval.horizon_n=2",
    "eval.max_trajectories=2",
    "eval.styles=[concise]",
]


@pytest.fixture(scope="session")
def tiny_overrides() -> List[str]:
    return list(TINY_OVERRIDES)


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    return load_run_config(None, [*TINY_OVERRIDES, f"output_dir={tmp_path / 'run'}"])


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    cfg = load_run_config(None, TINY_OVERRIDES)
    return build_dataset(cfg.datagen)


@pytest.fixture(scope="session")
def train_trajs(tiny_dataset):
    return tiny_dataset.split("train")


def directional_gradcheck(
    fn: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    grad: torch.Tensor,
    directions: int = 20,
    eps: float = 1e-6,
    seed: int = 0,
) -> float:
    """
    Largest relative gap between the analytic directional derivative
    grad . v and the central difference (fn(x + eps v) - fn(x - eps v)) / 2 eps,
    over random unit directions v. Everything in float64.
    """
    g = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for _ in range(directions):
            v = torch.randn(x.shape, generator=g, dtype=torch.float64)
            v /= v.norm()
            numeric = (fn(x + eps * v) - fn(x - eps * v)) / (2 * eps)
            analytic = (grad * v).sum()
            gap = float((numeric - analytic).abs() / max(1.0, float(analytic.abs())))
            worst = max(worst, gap)
    return worst


@pytest.fixture
def gradcheck():
    return directional_gradcheck


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def parameter_gradcheck(module: torch.nn.Module, loss_fn: Callable[[], torch.Tensor], directions: int = 20) -> float:
    """directional_gradcheck over the flattened trainable parameters of ``module`` (float64)."""
    params = [p for p in module.parameters() if p.requires_grad]
    module.zero_grad(set_to_none=True)
    loss_fn().backward()
    grad = torch.cat([p.grad.reshape(-1) if p.grad is not None else torch.zeros(p.numel(), dtype=p.dtype) for p in params])
    origin = torch.nn.utils.parameters_to_vector(params).detach().clone()

    def fn(vec: torch.Tensor) -> torch.Tensor:
        torch.nn.utils.vector_to_parameters(vec, params)
        return loss_fn()

    try:
        return directional_gradcheck(fn, origin, grad, directions=directions)
    finally:
        torch.nn.utils.vector_to_parameters(origin, params)


@pytest.fixture
def param_gradcheck():
    return parameter_gradcheck
