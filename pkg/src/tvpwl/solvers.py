"""First-order primal-dual (Chambolle-Pock) solvers for denoising.

Three problem families are covered:

* ROF: ``min_u 1/2 ||u - f||^2 + alpha TV(u)`` (:func:`solve_rof`);
* penalized TVpwL: ``min_u 1/2 ||u - f||^2 + alpha TVpwL(u; gamma)``
  (:func:`solve_tvpwl_penalized`);
* the residual method ``min_u J(u) s.t. ||u - f||_2 <= eps`` with ``J`` one
  of TV, TVpwL or TGV2 (:func:`solve_constrained`).

The data term of the penalized problems is the continuous L2 norm, i.e. it
carries the cell measure just like the regularizer does.  The residual
constraint counts samples (``eps = sigma * sqrt(N)``), no cell measure.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .grids import ScalarGrid, div_arr, grad_arr, op_norm_estimate
from .regularizers import (
    RegularizerSpec,
    _norms,
    _project_l2_ball_arr,
    _sym_ops,
    ball_project_arr,
    gamma_array,
    shrink_clip,
)

__all__ = [
    "PdhgConfig",
    "SolveReport",
    "PdhgState",
    "pdhg_step",
    "stop_check",
    "solve_rof",
    "solve_tvpwl_penalized",
    "solve_constrained",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PdhgConfig:
    """Hyperparameters of a primal-dual solve.

    ``tau``/``sigma`` may be numbers or ``"auto"``; auto steps are
    ``0.99 / L`` where ``L`` is a (slightly inflated) power-iteration
    estimate of the operator norm, so ``tau * sigma * ||K||^2 <= 1``.
    """

    max_iters: int = 20000
    tol: float = 1e-6
    tau: float | str = "auto"
    sigma: float | str = "auto"
    theta: float = 1.0
    check_every: int = 10
    power_iters: int = 100

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        for name in ("tau", "sigma"):
            v = getattr(self, name)
            if v != "auto" and not (isinstance(v, (int, float)) and v > 0):
                raise ValueError(f"{name} must be positive or 'auto'")

    def updated(self, **overrides) -> "PdhgConfig":
        return replace(self, **overrides)


@dataclass
class SolveReport:
    iterations: int
    rel_change: float
    objective_trace: list[float]
    discrepancy: float
    converged: bool
    tau: float = 0.0
    sigma: float = 0.0
    op_norm: float = 0.0
    objective: float = 0.0
    trace_every: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PdhgState:
    x: np.ndarray
    x_bar: np.ndarray
    y: np.ndarray
    tau: float
    sigma: float
    theta: float = 1.0


def pdhg_step(state: PdhgState, proxes, K, Kt) -> PdhgState:
    """One Chambolle-Pock iteration.

    ``proxes`` is ``(prox_g, prox_fstar)``; each is called as
    ``prox(v, step)`` and must return the prox of ``step`` times the function.
    """
    prox_g, prox_fstar = proxes
    y = prox_fstar(state.y + state.sigma * K(state.x_bar), state.sigma)
    x = prox_g(state.x - state.tau * Kt(y), state.tau)
    x_bar = x + state.theta * (x - state.x)
    return replace(state, x=x, x_bar=x_bar, y=y)


def stop_check(prev: np.ndarray, curr: np.ndarray, tol: float) -> bool:
    """True iff ``||curr - prev|| <= tol * (||curr|| + 1e-12)``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    prev = prev.values if isinstance(prev, ScalarGrid) else np.asarray(prev)
    curr = curr.values if isinstance(curr, ScalarGrid) else np.asarray(curr)
    return bool(np.linalg.norm(curr - prev) <= tol * (np.linalg.norm(curr) + 1e-12))


def _rel_change(prev, curr) -> float:
    return float(np.linalg.norm(curr - prev) / (np.linalg.norm(curr) + 1e-12))


@dataclass
class _Problem:
    K: Callable
    Kt: Callable
    prox_g: Callable
    prox_fstar: Callable
    objective: Callable
    x0: np.ndarray
    y0: np.ndarray
    u_of: Callable = lambda x: x


def _step_sizes(problem: _Problem, cfg: PdhgConfig) -> tuple[float, float, float]:
    L = 1.01 * op_norm_estimate(problem.K, problem.Kt, problem.x0.shape, iters=cfg.power_iters)
    if L == 0.0:
        L = 1.0
    tau, sigma = cfg.tau, cfg.sigma
    if tau == "auto" and sigma == "auto":
        tau = sigma = 0.99 / L
    elif tau == "auto":
        tau = 0.99**2 / (sigma * L * L)
    elif sigma == "auto":
        sigma = 0.99**2 / (tau * L * L)
    return float(tau), float(sigma), L


def _run(problem: _Problem, f: ScalarGrid, cfg: PdhgConfig, keep_best: bool):
    tau, sigma, L = _step_sizes(problem, cfg)
    state = PdhgState(problem.x0, problem.x0.copy(), problem.y0, tau, sigma, cfg.theta)
    proxes = (problem.prox_g, problem.prox_fstar)
    trace = [problem.objective(state.x)]
    best_x, best_obj = state.x, trace[0]
    rel = float("inf")
    converged = False
    it = 0
    while it < cfg.max_iters:
        prev = state.x
        state = pdhg_step(state, proxes, problem.K, problem.Kt)
        it += 1
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            obj = problem.objective(state.x)
            trace.append(obj)
            if obj < best_obj:
                best_x, best_obj = state.x, obj
            rel = _rel_change(prev, state.x)
            if stop_check(prev, state.x, cfg.tol):
                converged = True
                break
    x = best_x if keep_best else state.x
    u = problem.u_of(x)
    report = SolveReport(
        iterations=it,
        rel_change=rel,
        objective_trace=trace,
        discrepancy=float(np.linalg.norm(u - f.values)),
        converged=converged,
        tau=tau,
        sigma=sigma,
        op_norm=L,
        objective=float(problem.objective(x)),
        trace_every=cfg.check_every,
    )
    log.debug("pdhg: %d iterations, rel change %.3g, objective %.6g", it, rel, report.objective)
    return f.with_values(u), report


def _penalized(f: ScalarGrid, alpha: float, gam: np.ndarray, cfg: PdhgConfig):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = f.geometry
    sp, cm, fv = g.spacing, g.cell_measure, f.values

    def objective(u):
        excess = np.maximum(_norms(grad_arr(u, sp)) - gam, 0.0)
        return float(0.5 * np.sum((u - fv) ** 2) * cm + alpha * np.sum(excess) * cm)

    problem = _Problem(
        K=lambda u: grad_arr(u, sp),
        Kt=lambda p: -div_arr(p, sp),
        prox_g=lambda v, t: (v + t * fv) / (1.0 + t),
        prox_fstar=lambda p, s: shrink_clip(p, s * gam, alpha),
        objective=objective,
        x0=fv.copy(),
        y0=np.zeros((g.ndim,) + g.dims),
    )
    return _run(problem, f, cfg, keep_best=False)


def solve_rof(f: ScalarGrid, alpha: float, cfg: PdhgConfig | None = None):
    """Solve ``min_u 1/2 ||u - f||^2 + alpha TV(u)``; returns ``(u, report)``."""
    return _penalized(f, alpha, np.zeros(f.geometry.dims), cfg or PdhgConfig())


def solve_tvpwl_penalized(f: ScalarGrid, alpha: float, gamma, cfg: PdhgConfig | None = None):
    """Solve ``min_u 1/2 ||u - f||^2 + alpha TVpwL(u; gamma)``."""
    return _penalized(f, alpha, gamma_array(gamma, f.geometry), cfg or PdhgConfig())


def _constrained_first_order(f: ScalarGrid, gam: np.ndarray, eps: float) -> _Problem:
    g = f.geometry
    sp, cm, fv = g.spacing, g.cell_measure, f.values

    def objective(u):
        return float(np.sum(np.maximum(_norms(grad_arr(u, sp)) - gam, 0.0)) * cm)

    return _Problem(
        K=lambda u: grad_arr(u, sp),
        Kt=lambda p: -div_arr(p, sp),
        prox_g=lambda v, t: _project_l2_ball_arr(v, fv, eps),
        prox_fstar=lambda p, s: shrink_clip(p, s * gam, 1.0),
        objective=objective,
        x0=fv.copy(),
        y0=np.zeros((g.ndim,) + g.dims),
    )


def _constrained_tgv(f: ScalarGrid, beta: float, eps: float) -> _Problem:
    # primal x = [u, w_1..w_d]; dual y = [p_1..p_d, q...]
    g = f.geometry
    d, sp, cm, fv = g.ndim, g.spacing, g.cell_measure, f.values
    E, Et_neg, tw = _sym_ops(g)
    nq = 1 if d == 1 else 3

    def K(x):
        return np.concatenate([grad_arr(x[0], sp) - x[1:], E(x[1:])])

    def Kt(y):
        p, q = y[:d], y[d:]
        return np.concatenate([-div_arr(p, sp)[None], -p - Et_neg(q)])

    def prox_g(v, t):
        out = v.copy()
        out[0] = _project_l2_ball_arr(v[0], fv, eps)
        return out

    def prox_fstar(y, s):
        return np.concatenate([ball_project_arr(y[:d], 1.0), ball_project_arr(y[d:], beta, tw)])

    def objective(x):
        first = np.sum(_norms(grad_arr(x[0], sp) - x[1:]))
        second = np.sum(_norms(E(x[1:]), tw))
        return float((first + beta * second) * cm)

    x0 = np.zeros((1 + d,) + g.dims)
    x0[0] = fv
    return _Problem(
        K=K,
        Kt=Kt,
        prox_g=prox_g,
        prox_fstar=prox_fstar,
        objective=objective,
        x0=x0,
        y0=np.zeros((d + nq,) + g.dims),
        u_of=lambda x: x[0],
    )


def solve_constrained(f: ScalarGrid, reg: RegularizerSpec, eps: float, cfg: PdhgConfig | None = None):
    """Residual method: minimize the regularizer over ``||u - f||_2 <= eps``.

    The constraint is enforced by projection in every primal step, so every
    iterate is feasible; the best checked iterate (by objective, ``f``
    included) is returned.  For TGV2 the objective in the report is the joint
    value ``||grad u - w|| + beta ||E w||`` at the returned pair.
    """
    cfg = cfg or PdhgConfig()
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not isinstance(reg, RegularizerSpec):
        raise TypeError("reg must be a RegularizerSpec")
    if reg.kind == "TGV2":
        problem = _constrained_tgv(f, reg.beta, eps)
    else:
        gam = np.zeros(f.geometry.dims) if reg.kind == "TV" else gamma_array(reg.gamma, f.geometry)
        problem = _constrained_first_order(f, gam, eps)
    if eps == 0:
        obj = problem.objective(problem.x0)
        report = SolveReport(0, 0.0, [obj], 0.0, True, objective=obj, trace_every=cfg.check_every)
        return f.with_values(f.values.copy()), report
    return _run(problem, f, cfg, keep_best=True)
