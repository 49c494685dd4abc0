"""Synthetic ground truths with known derivatives, and Gaussian noise."""

from __future__ import annotations

import numpy as np

from .grids import GridGeometry, ScalarGrid

__all__ = [
    "DEFAULT_SEGMENTS",
    "DEFAULT_LENGTH",
    "synth_signal",
    "synth_image",
    "add_gaussian_noise",
]

DEFAULT_LENGTH = 8.0

# Piecewise-smooth profile on [0, 8] (segment bounds as fractions of the
# domain): descending ramps followed by upward jumps near x = 1 and 2,
# flat parts around the jumps at 3 and 4, curved parts on [4, 7].
DEFAULT_SEGMENTS = [
    {"kind": "linear", "start": 0 / 8, "end": 1 / 8, "value": 1.5, "slope": -0.6},
    {"kind": "linear", "start": 1 / 8, "end": 2 / 8, "value": 3.4, "slope": -0.8},
    {"kind": "constant", "start": 2 / 8, "end": 3 / 8, "value": 4.6},
    {"kind": "constant", "start": 3 / 8, "end": 4 / 8, "value": 1.6},
    {"kind": "sine", "start": 4 / 8, "end": 5 / 8, "value": 3.8, "amplitude": 0.5, "freq": 0.5},
    {"kind": "sine", "start": 5 / 8, "end": 7 / 8, "value": 2.0, "amplitude": 0.7, "freq": 0.25},
    {"kind": "linear", "start": 7 / 8, "end": 8 / 8, "value": 0.5, "slope": 0.5},
]

_KINDS = ("constant", "linear", "sine")


def _check_segments(segments):
    segs = sorted(segments, key=lambda s: s["start"])
    for s in segs:
        if s.get("kind") not in _KINDS:
            raise ValueError(f"unknown segment kind {s.get('kind')!r}")
        if not 0.0 <= s["start"] < s["end"] <= 1.0:
            raise ValueError(f"invalid segment bounds [{s['start']}, {s['end']}]")
    if abs(segs[0]["start"]) > 1e-12 or abs(segs[-1]["end"] - 1.0) > 1e-12:
        raise ValueError("segments must cover [0, 1]")
    for a, b in zip(segs, segs[1:]):
        if b["start"] < a["end"] - 1e-12:
            raise ValueError(f"overlapping segments at {b['start']}")
        if b["start"] > a["end"] + 1e-12:
            raise ValueError(f"gap between segments at {a['end']}")
    return segs


def synth_signal(n: int = 1000, segments=None, length: float = DEFAULT_LENGTH):
    """Sample a piecewise-smooth profile on ``n`` cell centres of ``[0, length]``.

    Each segment is a dict with ``kind`` (constant, linear or sine), ``start``
    and ``end`` as fractions of the domain, and ``value`` (level at the segment
    start), plus ``slope`` (linear) or ``amplitude`` / ``freq`` / ``phase``
    (sine: ``value + amplitude * sin(2 pi freq (x - x0) + phase)``).
    Returns ``(signal, derivative)`` as ScalarGrids with spacing ``length / n``.
    """
    if n < 10:
        raise ValueError("n must be >= 10")
    segs = _check_segments(DEFAULT_SEGMENTS if segments is None else segments)
    h = length / n
    x = (np.arange(n) + 0.5) * h
    u = np.zeros(n)
    du = np.zeros(n)
    for i, s in enumerate(segs):
        x0, x1 = s["start"] * length, s["end"] * length
        last = i == len(segs) - 1
        m = (x >= x0) & ((x <= x1) if last else (x < x1))
        t = x[m] - x0
        c = float(s.get("value", 0.0))
        if s["kind"] == "constant":
            u[m], du[m] = c, 0.0
        elif s["kind"] == "linear":
            k = float(s["slope"])
            u[m], du[m] = c + k * t, k
        else:
            a, w, ph = float(s["amplitude"]), 2 * np.pi * float(s["freq"]), float(s.get("phase", 0.0))
            u[m] = c + a * np.sin(w * t + ph)
            du[m] = a * w * np.cos(w * t + ph)
    geom = GridGeometry((n,), (h,))
    return ScalarGrid(geom, u), ScalarGrid(geom, du)


def synth_image(n: int = 128):
    """Piecewise-smooth test image in ``[0, 255]`` with its exact gradient norm.

    A shaded background, a radially shaded disk, a rectangle with a smooth
    ripple and a flat bar.  Unit pixel spacing.
    """
    if n < 16:
        raise ValueError("n must be >= 16")
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    s = n / 128.0
    img = 60.0 + 0.35 * xx / s + 0.15 * yy / s
    gx = np.full_like(img, 0.35 / s)
    gy = np.full_like(img, 0.15 / s)

    cy, cx, rad = 0.65 * n, 0.35 * n, 0.22 * n
    rr2 = (yy - cy) ** 2 + (xx - cx) ** 2
    disk = rr2 < rad**2
    img[disk] = 200.0 - 60.0 * rr2[disk] / rad**2
    gy[disk] = -120.0 * (yy[disk] - cy) / rad**2
    gx[disk] = -120.0 * (xx[disk] - cx) / rad**2

    rect = (yy > 0.12 * n) & (yy < 0.42 * n) & (xx > 0.5 * n) & (xx < 0.88 * n)
    period = 0.25 * n
    img[rect] = 150.0 + 25.0 * np.sin(2 * np.pi * xx[rect] / period)
    gx[rect] = 25.0 * 2 * np.pi / period * np.cos(2 * np.pi * xx[rect] / period)
    gy[rect] = 0.0

    bar = (yy > 0.75 * n) & (yy < 0.85 * n) & (xx > 0.6 * n) & (xx < 0.9 * n)
    img[bar] = 30.0
    gx[bar] = gy[bar] = 0.0

    geom = GridGeometry((n, n))
    return ScalarGrid(geom, img), ScalarGrid(geom, np.hypot(gx, gy))


def add_gaussian_noise(u: ScalarGrid, std: float, seed: int = 0) -> ScalarGrid:
    """Add i.i.d. N(0, std^2) noise, reproducibly for a given seed."""
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std == 0:
        return u.with_values(u.values.copy())
    rng = np.random.default_rng(seed)
    return u.with_values(u.values + std * rng.standard_normal(u.values.shape))
