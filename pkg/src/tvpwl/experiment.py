"""End-to-end denoising experiments driven by a declarative RunConfig."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .gamma import GammaPipelineConfig, gamma_pipeline
from .grids import ScalarGrid
from .io import read_grid, write_grid
from .metrics import SsimParams, discrepancy, mse, psnr, ssim
from .regularizers import REG_KINDS, RegularizerSpec
from .solvers import PdhgConfig, solve_constrained
from .synth import add_gaussian_noise, synth_image, synth_signal

__all__ = ["ExperimentError", "Stage", "RunConfig", "run_experiment", "load_run_config"]

MANIFEST_VERSION = 1


class ExperimentError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class RunConfig:
    """Declarative experiment description (JSON-compatible).

    Exactly one of ``input`` (CSV/PGM path) and ``synth`` provides the clean
    signal.  With ``input_is_noisy`` the input is used as data directly and
    ``noise.std`` only sets the discrepancy radius.  ``gamma`` is
    ``"estimate"``, ``"exact"`` (synthetic inputs only) or a constant.
    """

    input: str | None = None
    input_is_noisy: bool = False
    ground_truth: str | None = None
    spacing: list[float] | None = None
    synth: dict | None = field(default_factory=lambda: {"kind": "signal", "n": 1000})
    noise: dict = field(default_factory=lambda: {"std": 0.1, "seed": 0})
    pipeline: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    regularizers: list[str] = field(default_factory=lambda: list(REG_KINDS))
    beta: float = 1.25
    eps: float | str = "auto"
    gamma: float | str = "estimate"
    ssim_range: float | None = None
    output_dir: str = "run_output"

    def __post_init__(self):
        if self.input is not None:
            self.synth = None
        if self.input is None and self.synth is None:
            raise ValueError("RunConfig needs an input path or synth settings")
        std = float(self.noise.get("std", 0.0))
        if std < 0:
            raise ValueError("noise std must be nonnegative")
        kinds = [str(k).upper() for k in self.regularizers]
        bad = [k for k in kinds if k not in REG_KINDS]
        if bad or not kinds:
            raise ValueError(f"regularizers must be a nonempty subset of {REG_KINDS}, got {self.regularizers}")
        self.regularizers = list(dict.fromkeys(kinds))
        if self.eps != "auto" and float(self.eps) < 0:
            raise ValueError("eps must be nonnegative or 'auto'")
        if isinstance(self.gamma, str) and self.gamma not in ("estimate", "exact"):
            raise ValueError("gamma must be 'estimate', 'exact' or a number")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown RunConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_run_config(path) -> RunConfig:
    return RunConfig.from_dict(json.loads(Path(path).read_text()))


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _quality(a: ScalarGrid, ref: ScalarGrid, L: float) -> dict:
    return {
        "ssim": ssim(a, ref, SsimParams(dynamic_range=L)),
        "psnr": _finite(psnr(a, ref, L)),
        "mse": mse(a, ref),
    }


class Stage:
    """Context manager re-raising failures as ExperimentError tagged with ``name``."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, ExperimentError):
            raise ExperimentError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


def _load(cfg: RunConfig):
    """Clean signal (or None), data f, exact gradient magnitude (or None)."""
    if cfg.input is not None:
        data = read_grid(cfg.input, cfg.spacing)
        truth = None
        if cfg.ground_truth is not None:
            truth = read_grid(cfg.ground_truth, data.geometry.spacing)
            if truth.geometry.dims != data.geometry.dims:
                raise ValueError(f"ground truth shape {truth.geometry.dims} differs from input {data.geometry.dims}")
        if cfg.input_is_noisy:
            return truth, data, None
        return data, None, None
    synth = dict(cfg.synth)
    kind = synth.pop("kind", "signal")
    if kind == "signal":
        u, du = synth_signal(
            int(synth.get("n", 1000)), synth.get("segments"), float(synth.get("length", 8.0))
        )
        return u, None, u.with_values(np.abs(du.values))
    if kind == "image":
        u, gnorm = synth_image(int(synth.get("n", 128)))
        return u, None, gnorm
    raise ValueError(f"unknown synth kind {kind!r}")


def run_experiment(cfg: RunConfig | dict) -> dict:
    """Run the experiment, write every artifact and return the manifest.

    Files land in ``cfg.output_dir``; the manifest (``manifest.json``) lists
    them by relative path.  The manifest contains nothing run-dependent
    (no timings, not even the output directory), so a fixed seed reproduces it byte for byte.
    """
    if isinstance(cfg, dict):
        cfg = RunConfig.from_dict(cfg)
    out = Path(cfg.output_dir)
    with Stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        solver_cfg = PdhgConfig(**cfg.solver)
        pipe_cfg = GammaPipelineConfig.from_dict(cfg.pipeline)

    artifacts: dict[str, dict] = {}

    def save(name: str, grid: ScalarGrid, preview: tuple | None = None):
        path = out / f"{name}.csv"
        write_grid(path, grid)
        entry = {"path": path.name, "format": "csv", "shape": list(grid.geometry.dims)}
        if preview is not None and grid.geometry.ndim == 2:
            ppath = out / f"{name}.pgm"
            write_grid(ppath, grid, *preview)
            entry["preview"] = ppath.name
            entry["preview_sidecar"] = ppath.with_suffix(".json").name
        artifacts[name] = entry

    with Stage("load"):
        truth, f, exact_gamma = _load(cfg)
    std = float(cfg.noise.get("std", 0.0))
    with Stage("noise"):
        if f is None:
            f = add_gaussian_noise(truth, std, int(cfg.noise.get("seed", 0)))
    geom = f.geometry
    n_samples = geom.size
    eps = std * math.sqrt(n_samples) if cfg.eps == "auto" else float(cfg.eps)
    is_image = geom.ndim == 2
    ref_for_range = truth if truth is not None else f
    if cfg.ssim_range is not None:
        L = float(cfg.ssim_range)
    elif is_image:
        L = 255.0
    else:
        L = float(np.ptp(ref_for_range.values)) or 1.0
    img_preview = (0.0, 255.0) if is_image else None

    with Stage("write"):
        if truth is not None:
            save("ground_truth", truth, img_preview)
        save("noisy", f, img_preview)

    reports: dict[str, dict] = {}
    smooth_info: dict = {}
    gamma_values = None
    if "TV_PWL" in cfg.regularizers or cfg.gamma == "estimate":
        with Stage("gamma"):
            if cfg.gamma == "estimate":
                res = gamma_pipeline(f, pipe_cfg, solver_cfg)
                reports["rof_overreg"] = res.rof_report.to_dict()
                smooth_info = res.smooth_info
                save("u_tv", res.u_tv, img_preview)
                save("residual", res.residual, ())
                save("smoothed_residual", res.smoothed, ())
                for axis, d in enumerate(res.derivatives):
                    save(f"derivative_{axis}", d)
                gamma_values = res.gamma.values
            elif cfg.gamma == "exact":
                if exact_gamma is None:
                    raise ValueError("gamma='exact' requires a synthetic ground truth")
                gamma_values = exact_gamma.values
            else:
                gamma_values = np.full(geom.dims, float(cfg.gamma))
            save("gamma", f.with_values(gamma_values), ())

    recons: dict[str, ScalarGrid] = {}
    for kind in cfg.regularizers:
        with Stage(f"solve:{kind}"):
            reg = RegularizerSpec(kind, gamma=gamma_values if kind == "TV_PWL" else None, beta=cfg.beta)
            u, report = solve_constrained(f, reg, eps, solver_cfg)
            recons[kind] = u
            reports[kind] = report.to_dict()
            save(f"recon_{kind}", u, img_preview)

    with Stage("metrics"):
        metrics: dict = {"dynamic_range": L, "discrepancy": {}, "cross_ssim": {}}
        if truth is not None:
            vs = {"noisy": _quality(f, truth, L)}
            for kind, u in recons.items():
                vs[kind] = _quality(u, truth, L)
            metrics["vs_ground_truth"] = vs
        for kind, u in recons.items():
            metrics["discrepancy"][kind] = discrepancy(u, f)
        kinds = list(recons)
        for i, a in enumerate(kinds):
            for b in kinds[i + 1 :]:
                metrics["cross_ssim"][f"{a}|{b}"] = ssim(recons[a], recons[b], SsimParams(dynamic_range=L))

    manifest = {
        "version": MANIFEST_VERSION,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "output_dir"},
        "geometry": {"dims": list(geom.dims), "spacing": list(geom.spacing)},
        "eps": eps,
        "artifacts": artifacts,
        "metrics": metrics,
        "reports": reports,
        "smooth_info": smooth_info,
    }
    with Stage("write"):
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
