"""Image quality metrics: SSIM, PSNR, MSE and the residual discrepancy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import ScalarGrid

__all__ = ["SsimParams", "ssim", "ssim_map", "psnr", "mse", "discrepancy"]


@dataclass(frozen=True)
class SsimParams:
    """SSIM constants.  ``dynamic_range=None`` uses the joint value range of
    the two inputs (1.0 if both are constant and equal)."""

    dynamic_range: float | None = None
    k1: float = 0.01
    k2: float = 0.03
    win_size: int = 11
    win_sigma: float = 1.5

    def __post_init__(self):
        if self.dynamic_range is not None and not self.dynamic_range > 0:
            raise ValueError("dynamic_range must be positive")
        if self.win_size < 1 or not self.win_sigma > 0:
            raise ValueError("invalid SSIM window")


def _arrays(a, b):
    if isinstance(a, ScalarGrid) and isinstance(b, ScalarGrid):
        if a.geometry.dims != b.geometry.dims:
            raise ValueError(f"geometry mismatch: {a.geometry.dims} vs {b.geometry.dims}")
        return a.values, b.values
    a = a.values if isinstance(a, ScalarGrid) else np.asarray(a, dtype=float)
    b = b.values if isinstance(b, ScalarGrid) else np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _window(size: int, sigma: float) -> np.ndarray:
    k = np.arange(size, dtype=float) - (size - 1) / 2.0
    w = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(x: np.ndarray, windows: list[np.ndarray]) -> np.ndarray:
    for axis, w in enumerate(windows):
        n = x.shape[axis] - w.size + 1
        acc = np.zeros(x.shape[:axis] + (n,) + x.shape[axis + 1 :])
        for j, wj in enumerate(w):
            acc += wj * np.take(x, np.arange(j, j + n), axis=axis)
        x = acc
    return x


def ssim_map(a, b, params: SsimParams | None = None) -> np.ndarray:
    """Local SSIM over every full window position (Gaussian weighting).

    The window is clipped to the signal extent on short axes.
    """
    p = params or SsimParams()
    a, b = _arrays(a, b)
    L = p.dynamic_range
    if L is None:
        L = max(a.max(), b.max()) - min(a.min(), b.min())
        L = float(L) if L > 0 else 1.0
    c1, c2 = (p.k1 * L) ** 2, (p.k2 * L) ** 2
    wins = [_window(min(p.win_size, n), p.win_sigma) for n in a.shape]
    mu_a, mu_b = _filter_valid(a, wins), _filter_valid(b, wins)
    var_a = _filter_valid(a * a, wins) - mu_a**2
    var_b = _filter_valid(b * b, wins) - mu_b**2
    cov = _filter_valid(a * b, wins) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, params: SsimParams | None = None) -> float:
    """Mean structural similarity of two equally shaped signals or images."""
    a_arr, b_arr = _arrays(a, b)
    if np.array_equal(a_arr, b_arr):
        return 1.0
    return float(np.clip(np.mean(ssim_map(a_arr, b_arr, params)), -1.0, 1.0))


def mse(a, b) -> float:
    a, b = _arrays(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, L: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(L * L / m)


def discrepancy(u, f) -> float:
    """Euclidean residual ``||u - f||_2`` over raw samples (no cell measure)."""
    u, f = _arrays(u, f)
    return float(np.linalg.norm(u - f))
