from lcvn.datagen.world import integrate_actions
from lcvn.metrics.images import psnr, ssim
from lcvn.metrics.navigation import PoseTrace, ate, pad_pair, rpe, success_rate, umeyama_alignment
from lcvn.metrics.report import MetricsReport, TrajectoryRecord, plot_horizon_curves, plot_paths
from lcvn.metrics.rollout import (
    LatentEmbedders,
    OracleImaginer,
    UniImaginer,
    WorldModelImaginer,
    dreamsim_score,
    dreamsim_terms,
    metric_at_n,
    metric_curve,
)

__all__ = [
    "LatentEmbedders",
    "MetricsReport",
    "OracleImaginer",
    "PoseTrace",
    "TrajectoryRecord",
    "UniImaginer",
    "WorldModelImaginer",
    "ate",
    "dreamsim_score",
    "dreamsim_terms",
    "integrate_actions",
    "metric_at_n",
    "metric_curve",
    "pad_pair",
    "plot_horizon_curves",
    "plot_paths",
    "psnr",
    "rpe",
    "ssim",
    "success_rate",
    "umeyama_alignment",
]
