from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from lcvn.errors import MetricError

DATA_RANGE = 1.0
SSIM_WINDOW = 7
PSNR_CAP = 100.0
_MSE_FLOOR = 1e-10


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise MetricError("empty image")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = DATA_RANGE) -> float:
    """10 log10(R^2 / MSE) in dB, capped at 100 dB for near-identical images."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP
    return float(min(10.0 * np.log10(data_range**2 / mse), PSNR_CAP))


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: int, data_range: float) -> float:
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    n = window * window
    cov_norm = n / (n - 1)
    ux = uniform_filter(x, size=window)
    uy = uniform_filter(y, size=window)
    vx = cov_norm * (uniform_filter(x * x, size=window) - ux * ux)
    vy = cov_norm * (uniform_filter(y * y, size=window) - uy * uy)
    vxy = cov_norm * (uniform_filter(x * y, size=window) - ux * uy)
    num = (2 * ux * uy + c1) * (2 * vxy + c2)
    den = (ux**2 + uy**2 + c1) * (vx + vy + c2)
    pad = (window - 1) // 2
    s = num / den
    if s.shape[0] > 2 * pad and s.shape[1] > 2 * pad:
        s = s[pad:-pad, pad:-pad]
    return float(s.mean())


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW, data_range: float = DATA_RANGE) -> float:
    """Mean windowed SSIM over valid windows, averaged over channels; (H, W) or (H, W, C) inputs."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise MetricError(f"expected (H, W) or (H, W, C) images, got {a.shape}")
    return float(np.mean([_ssim_channel(a[..., c], b[..., c], window, data_range) for c in range(a.shape[-1])]))
