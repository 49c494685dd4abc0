"""Piecewise-Lipschitz total variation denoising.

Grid operators, the TV_pwL regularizer with TV and TGV2 baselines, primal-dual
solvers for penalized and residual-constrained problems, data-driven
estimation of the gradient bound gamma, quality metrics and experiment I/O.
"""

from .experiment import ExperimentError, RunConfig, load_run_config, run_experiment
from .gamma import (
    GammaPipelineConfig,
    GammaPipelineResult,
    Smooth1D,
    Smooth2D,
    central_diff_strided,
    estimate_gamma,
    gamma_pipeline,
    gaussian_smooth,
    residual_after_overreg,
    robust_local_linear_smooth,
)
from .grids import (
    GridGeometry,
    ScalarGrid,
    SymTensorGrid,
    VectorGrid,
    as_scalar_grid,
    div,
    grad,
    inner,
    op_norm_estimate,
    pointwise_norm,
    sym_div,
    sym_grad,
)
from .io import FormatError, read_csv, read_grid, read_pgm, write_csv, write_grid, write_pgm
from .metrics import SsimParams, discrepancy, mse, psnr, ssim
from .regularizers import (
    REG_KINDS,
    GammaMap,
    RegularizerSpec,
    project_dual_ball,
    project_l2_ball,
    prox_dual_tvpwl,
    tgv2_value,
    tv_value,
    tvpwl_argmin_g,
    tvpwl_value,
)
from .solvers import (
    PdhgConfig,
    PdhgState,
    SolveReport,
    pdhg_step,
    solve_constrained,
    solve_rof,
    solve_tvpwl_penalized,
    stop_check,
)
from .synth import add_gaussian_noise, synth_image, synth_signal

__version__ = "0.1.0"
