"""Estimating the local gradient bound gamma from noisy data.

Pipeline: an over-regularized ROF solve segments the jumps, the residual
``f - u_tv`` keeps the smooth part of the signal (up to piecewise-constant
offsets), the residual is smoothed (robust LOWESS in 1D, a Gaussian filter in
2D) and differentiated with wide central differences.  The magnitude of that
derivative is gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grids import ScalarGrid
from .regularizers import GammaMap
from .solvers import PdhgConfig, solve_rof

__all__ = [
    "Smooth1D",
    "Smooth2D",
    "GammaPipelineConfig",
    "GammaPipelineResult",
    "residual_after_overreg",
    "robust_local_linear_smooth",
    "gaussian_kernel",
    "gaussian_smooth",
    "central_diff_strided",
    "gamma_pipeline",
    "estimate_gamma",
]


@dataclass(frozen=True)
class Smooth1D:
    window: int = 50
    robust_passes: int = 5


@dataclass(frozen=True)
class Smooth2D:
    gauss_sigma: float = 2.0
    kernel_radius: int | None = None

    @property
    def radius(self) -> int:
        if self.kernel_radius is not None:
            return int(self.kernel_radius)
        return int(math.ceil(3 * self.gauss_sigma))


@dataclass(frozen=True)
class GammaPipelineConfig:
    """Pipeline parameters.  ``None`` fields take the dimension-specific defaults
    (``alpha_over`` 0.5 / 500, ``diff_stride`` 20 / 3 for 1D / 2D)."""

    alpha_over: float | None = None
    smooth_1d: Smooth1D = field(default_factory=Smooth1D)
    smooth_2d: Smooth2D = field(default_factory=Smooth2D)
    diff_stride: int | None = None

    def resolved(self, ndim: int) -> "GammaPipelineConfig":
        alpha = self.alpha_over if self.alpha_over is not None else (0.5 if ndim == 1 else 500.0)
        stride = self.diff_stride if self.diff_stride is not None else (20 if ndim == 1 else 3)
        cfg = replace(self, alpha_over=float(alpha), diff_stride=int(stride))
        if cfg.alpha_over <= 0:
            raise ValueError("alpha_over must be positive")
        if cfg.diff_stride < 1:
            raise ValueError("diff_stride must be >= 1")
        if cfg.smooth_1d.window < 3 or cfg.smooth_1d.robust_passes < 0:
            raise ValueError("smoothing window must be >= 3 and robust_passes >= 0")
        if cfg.smooth_2d.gauss_sigma <= 0:
            raise ValueError("gauss_sigma must be positive")
        return cfg

    @classmethod
    def from_dict(cls, d: dict | None) -> "GammaPipelineConfig":
        d = dict(d or {})
        s1 = Smooth1D(**d.pop("smooth_1d", {}))
        s2 = Smooth2D(**d.pop("smooth_2d", {}))
        return cls(smooth_1d=s1, smooth_2d=s2, **d)


@dataclass
class GammaPipelineResult:
    u_tv: ScalarGrid
    residual: ScalarGrid
    smoothed: ScalarGrid
    derivatives: list[ScalarGrid]
    gamma: ScalarGrid
    rof_report: object = None
    smooth_info: dict = field(default_factory=dict)


def residual_after_overreg(f: ScalarGrid, alpha_over: float, cfg: PdhgConfig | None = None):
    """Over-regularized ROF solution and the residual ``f - u_tv``."""
    if not alpha_over > 0:
        raise ValueError("alpha_over must be positive")
    u_tv, _ = solve_rof(f, alpha_over, cfg)
    return u_tv, f.with_values(f.values - u_tv.values)


def _local_linear(y, idx, w, fallback):
    """Weighted linear fit for every row of ``idx``, evaluated at the row's node."""
    x = idx.astype(float)
    yw = y[idx]
    sw = w.sum(axis=1)
    safe = np.where(sw > 0, sw, 1.0)
    xm = (w * x).sum(axis=1) / safe
    ym = (w * yw).sum(axis=1) / safe
    dx = x - xm[:, None]
    sxx = (w * dx * dx).sum(axis=1)
    sxy = (w * dx * (yw - ym[:, None])).sum(axis=1)
    centre = np.arange(len(y), dtype=float)
    # Degenerate design: fall back to the weighted mean.
    slope = np.where(sxx > 1e-12 * np.maximum(sw, 1e-300), sxy / np.where(sxx > 0, sxx, 1.0), 0.0)
    est = ym + slope * (centre - xm)
    return np.where(sw > 0, est, fallback)


def robust_local_linear_smooth(
    r: ScalarGrid,
    window: int = 50,
    robust_passes: int = 5,
    return_info: bool = False,
):
    """Robust LOWESS smoother over a sliding window of ``window`` samples.

    Every node gets a weighted linear least-squares fit over its ``window``
    nearest samples (tricube distance weights); subsequent passes multiply in
    bisquare weights of the residuals scaled by six median absolute residuals.
    An even window is reduced by one.  A window longer than the signal is
    clamped to it; ``return_info=True`` reports that in a metadata dict.
    Linear inputs are reproduced exactly for any weights.
    """
    if r.geometry.ndim != 1:
        raise ValueError("robust_local_linear_smooth expects a 1D grid")
    if window < 3:
        raise ValueError("window must be >= 3")
    if robust_passes < 0:
        raise ValueError("robust_passes must be >= 0")
    y = r.values
    n = y.size
    span = int(window)
    if span % 2 == 0:
        span -= 1
    clamped = span > n
    if clamped:
        span = n if n % 2 == 1 else n - 1
    half = span // 2
    lo = np.clip(np.arange(n) - half, 0, n - span)
    idx = lo[:, None] + np.arange(span)[None, :]
    dist = np.abs(idx - np.arange(n)[:, None]).astype(float)
    bandwidth = dist.max(axis=1, keepdims=True) + 1.0
    tricube = (1.0 - (dist / bandwidth) ** 3) ** 3

    est = _local_linear(y, idx, tricube, y)
    # Floor keeps roundoff-level residuals from being treated as outliers.
    floor = 1e-10 * float(np.ptp(y))
    for _ in range(robust_passes):
        res = y - est
        mad = float(np.median(np.abs(res)))
        if mad == 0.0 and floor == 0.0:
            break
        z = res / (6.0 * max(mad, floor))
        robust = np.where(np.abs(z) < 1.0, (1.0 - z * z) ** 2, 0.0)
        est = _local_linear(y, idx, tricube * robust[idx], est)
    out = r.with_values(est)
    if return_info:
        return out, {"window": span, "requested_window": int(window), "clamped": clamped}
    return out


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    k = np.arange(-radius, radius + 1, dtype=float)
    w = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_smooth(r: ScalarGrid, sigma: float = 2.0, radius: int | None = None) -> ScalarGrid:
    """Separable truncated Gaussian filter with replicate padding."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if radius is None:
        radius = int(math.ceil(3 * sigma))
    kern = gaussian_kernel(sigma, radius)
    v = r.values
    for axis in range(v.ndim):
        pad = [(0, 0)] * v.ndim
        pad[axis] = (radius, radius)
        padded = np.pad(v, pad, mode="edge")
        n = v.shape[axis]
        acc = np.zeros_like(v)
        for j, wj in enumerate(kern):
            acc += wj * np.take(padded, np.arange(j, j + n), axis=axis)
        v = acc
    return r.with_values(v)


def central_diff_strided(v: ScalarGrid, k: int, axis: int = 0) -> ScalarGrid:
    """Central difference over ``2k`` samples along ``axis``.

    Within ``k`` samples of either end the same span is shifted inwards
    (one-sided difference), so the result covers the whole grid.
    """
    if k < 1:
        raise ValueError("stride must be >= 1")
    a = v.values
    n = a.shape[axis]
    if n <= 2 * k:
        raise ValueError(f"extent {n} along axis {axis} must exceed twice the stride {k}")
    h = v.geometry.spacing[axis]
    centre = np.clip(np.arange(n), k, n - 1 - k)
    fwd = np.take(a, centre + k, axis=axis)
    bwd = np.take(a, centre - k, axis=axis)
    return v.with_values((fwd - bwd) / (2 * k * h))


def gamma_pipeline(
    f: ScalarGrid,
    cfg: GammaPipelineConfig | None = None,
    solver_cfg: PdhgConfig | None = None,
) -> GammaPipelineResult:
    """Run every stage and keep the intermediates."""
    cfg = (cfg or GammaPipelineConfig()).resolved(f.geometry.ndim)
    u_tv, report = solve_rof(f, cfg.alpha_over, solver_cfg)
    r = f.with_values(f.values - u_tv.values)
    info = {}
    if f.geometry.ndim == 1:
        s = cfg.smooth_1d
        smoothed, info = robust_local_linear_smooth(r, s.window, s.robust_passes, return_info=True)
    else:
        s = cfg.smooth_2d
        smoothed = gaussian_smooth(r, s.gauss_sigma, s.radius)
    derivs = [central_diff_strided(smoothed, cfg.diff_stride, axis) for axis in range(f.geometry.ndim)]
    mag = np.sqrt(sum(d.values**2 for d in derivs))
    return GammaPipelineResult(u_tv, r, smoothed, derivs, f.with_values(mag), report, info)


def estimate_gamma(
    f: ScalarGrid,
    cfg: GammaPipelineConfig | None = None,
    solver_cfg: PdhgConfig | None = None,
) -> GammaMap:
    return GammaMap(gamma_pipeline(f, cfg, solver_cfg).gamma.values)
