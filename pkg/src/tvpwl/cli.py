"""Command-line interface: ``tvpwl <subcommand> ...``.

Every subcommand exits with 0 on success.  Failures print a message tagged
with the failing stage to stderr and exit with 2 (bad input) or 1 (anything
else).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .experiment import ExperimentError, Stage, load_run_config, run_experiment
from .gamma import GammaPipelineConfig, Smooth1D, Smooth2D, gamma_pipeline
from .io import FormatError, read_grid, write_grid
from .metrics import SsimParams, discrepancy, mse, psnr, ssim
from .regularizers import RegularizerSpec
from .solvers import PdhgConfig, solve_constrained, solve_rof, solve_tvpwl_penalized
from .synth import add_gaussian_noise, synth_image, synth_signal

__all__ = ["main", "build_parser"]

_REG_NAMES = {"tv": "TV", "tvpwl": "TV_PWL", "tgv": "TGV2"}


def _spacing(text: str | None):
    if text is None:
        return None
    return tuple(float(t) for t in text.split(","))


def _solver_cfg(args) -> PdhgConfig:
    return PdhgConfig(max_iters=args.max_iters, tol=args.tol)


def _add_solver_flags(p):
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--tol", type=float, default=1e-6)


def _preview_range(grid):
    return (0.0, 255.0) if grid.geometry.ndim == 2 else (None, None)


def cmd_synth(args):
    with Stage("synth"):
        if args.kind == "signal":
            segments = json.loads(args.segments) if args.segments else None
            u, d = synth_signal(args.n, segments, args.length)
        else:
            u, d = synth_image(args.n)
    with Stage("write"):
        write_grid(args.output, u, *_preview_range(u))
        if args.derivative:
            write_grid(args.derivative, d)
    return 0


def cmd_add_noise(args):
    with Stage("load"):
        u = read_grid(args.input, _spacing(args.spacing))
    with Stage("noise"):
        f = add_gaussian_noise(u, args.std, args.seed)
    with Stage("write"):
        write_grid(args.output, f, *_preview_range(f))
    return 0


def cmd_estimate_gamma(args):
    with Stage("load"):
        f = read_grid(args.input, _spacing(args.spacing))
    with Stage("gamma"):
        cfg = GammaPipelineConfig(
            alpha_over=args.alpha_over,
            smooth_1d=Smooth1D(args.window, args.robust_passes),
            smooth_2d=Smooth2D(args.gauss_sigma),
            diff_stride=args.stride,
        )
        res = gamma_pipeline(f, cfg, _solver_cfg(args))
    with Stage("write"):
        write_grid(args.output, res.gamma)
        if args.preview:
            write_grid(args.preview, res.gamma)
        if args.intermediates:
            stem = args.intermediates
            write_grid(f"{stem}_u_tv.csv", res.u_tv)
            write_grid(f"{stem}_residual.csv", res.residual)
            write_grid(f"{stem}_smoothed.csv", res.smoothed)
    return 0


def cmd_denoise(args):
    with Stage("load"):
        f = read_grid(args.input, _spacing(args.spacing))
        gamma = None
        if args.gamma is not None:
            gamma = read_grid(args.gamma, f.geometry.spacing).values
            if gamma.shape != f.geometry.dims:
                raise ValueError(f"gamma shape {gamma.shape} differs from input {f.geometry.dims}")
        elif args.gamma_const is not None:
            gamma = args.gamma_const
    kind = _REG_NAMES[args.reg]
    cfg = _solver_cfg(args)
    with Stage(f"solve:{kind}"):
        if kind == "TV_PWL" and gamma is None:
            raise ValueError("--reg tvpwl needs --gamma or --gamma-const")
        if args.alpha is not None:
            if kind == "TV":
                u, report = solve_rof(f, args.alpha, cfg)
            elif kind == "TV_PWL":
                u, report = solve_tvpwl_penalized(f, args.alpha, gamma, cfg)
            else:
                raise ValueError("--alpha (penalized form) is available for tv and tvpwl only")
        else:
            if args.eps is not None:
                eps = args.eps
            elif args.sigma is not None:
                eps = args.sigma * math.sqrt(f.geometry.size)
            else:
                raise ValueError("give --eps, --sigma or --alpha")
            reg = RegularizerSpec(kind, gamma=gamma if kind == "TV_PWL" else None, beta=args.beta)
            u, report = solve_constrained(f, reg, eps, cfg)
    with Stage("write"):
        write_grid(args.output, u, *_preview_range(u))
        if args.report:
            with open(args.report, "w") as fh:
                json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
    return 0


def cmd_compare(args):
    with Stage("load"):
        a = read_grid(args.a)
        b = read_grid(args.b)
    with Stage("metrics"):
        if a.geometry.dims != b.geometry.dims:
            raise ValueError(f"shape mismatch: {a.geometry.dims} vs {b.geometry.dims}")
        L = args.range
        if L is None:
            L = 255.0 if a.geometry.ndim == 2 else float(np.ptp(b.values)) or 1.0
        p = psnr(a, b, L)
        out = {
            "ssim": ssim(a, b, SsimParams(dynamic_range=L)),
            "psnr": p if math.isfinite(p) else "inf",
            "mse": mse(a, b),
            "discrepancy": discrepancy(a, b),
            "dynamic_range": L,
        }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_run(args):
    with Stage("config"):
        cfg = load_run_config(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
    manifest = run_experiment(cfg)
    print(json.dumps(manifest["metrics"], indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvpwl", description="Piecewise-Lipschitz TV denoising toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground truth")
    p.add_argument("--kind", choices=["signal", "image"], default="signal")
    p.add_argument("--n", type=int, default=None, help="samples (signal, default 1000) or side (image, default 128)")
    p.add_argument("--length", type=float, default=8.0, help="signal domain length")
    p.add_argument("--segments", help="JSON list of segment dicts (signal only)")
    p.add_argument("--derivative", help="also write the exact derivative (signal: u', image: |grad u|)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("add-noise", help="add seeded Gaussian noise")
    p.add_argument("input")
    p.add_argument("--std", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("estimate-gamma", help="estimate the gradient bound map")
    p.add_argument("input")
    p.add_argument("--alpha-over", type=float, default=None)
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--robust-passes", type=int, default=5)
    p.add_argument("--gauss-sigma", type=float, default=2.0)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--spacing")
    p.add_argument("--preview", help="PGM preview of gamma scaled to [0, 255]")
    p.add_argument("--intermediates", metavar="STEM", help="write STEM_u_tv.csv, STEM_residual.csv, STEM_smoothed.csv")
    p.add_argument("-o", "--output", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_estimate_gamma)

    p = sub.add_parser("denoise", help="denoise with TV, TV_pwL or TGV2")
    p.add_argument("input")
    p.add_argument("--reg", choices=sorted(_REG_NAMES), required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gamma", help="gamma map (CSV or PGM)")
    g.add_argument("--gamma-const", type=float)
    e = p.add_mutually_exclusive_group()
    e.add_argument("--eps", type=float, help="discrepancy radius")
    e.add_argument("--sigma", type=float, help="noise std; eps = sigma * sqrt(N)")
    e.add_argument("--alpha", type=float, help="solve the penalized form with this weight")
    p.add_argument("--beta", type=float, default=1.25)
    p.add_argument("--spacing")
    p.add_argument("--report", help="write the solver report as JSON")
    p.add_argument("-o", "--output", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("compare", help="print SSIM/PSNR/MSE of A against reference B as JSON")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--range", type=float, default=None, help="dynamic range L")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run", help="run a full experiment from a RunConfig JSON file")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "n", 0) is None:
        args.n = 1000 if args.kind == "signal" else 128
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"tvpwl: {exc}", file=sys.stderr)
        cause = exc.__cause__
        return 2 if isinstance(cause, (ValueError, FormatError, OSError, json.JSONDecodeError)) else 1


if __name__ == "__main__":
    sys.exit(main())
