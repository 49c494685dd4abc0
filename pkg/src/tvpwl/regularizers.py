"""TV, piecewise-Lipschitz TV and TGV2: values and proximal building blocks.

The piecewise-Lipschitz functional measures how far the gradient field is from
the set of fields bounded pointwise by ``gamma``::

    TVpwL(u; gamma) = min_g  sum_i |grad u(i) - g(i)|  s.t.  |g(i)| <= gamma_i

On a grid the constraint decouples per node, the minimizer is the radial
projection of ``grad u(i)`` onto the ``gamma_i`` ball, and the value is
``sum_i max(|grad u(i)| - gamma_i, 0)`` times the cell measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import (
    TENSOR_WEIGHTS,
    GridGeometry,
    ScalarGrid,
    SymTensorGrid,
    VectorGrid,
    div_arr,
    grad_arr,
    op_norm_estimate,
    sym_div_arr,
    sym_grad_arr,
)

__all__ = [
    "GammaMap",
    "RegularizerSpec",
    "REG_KINDS",
    "gamma_array",
    "tv_value",
    "tvpwl_value",
    "tvpwl_argmin_g",
    "prox_dual_tvpwl",
    "project_dual_ball",
    "project_l2_ball",
    "tgv2_value",
    "shrink_clip",
    "ball_project_arr",
]

REG_KINDS = ("TV", "TV_PWL", "TGV2")


@dataclass(frozen=True, eq=False)
class GammaMap:
    """Nonnegative pointwise gradient bound: a constant or a grid of values."""

    values: float | np.ndarray

    def __post_init__(self):
        v = self.values
        if isinstance(v, ScalarGrid):
            v = v.values
        if np.ndim(v) == 0:
            v = float(v)
        else:
            v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("gamma must be finite")
        if np.any(np.asarray(v) < 0):
            raise ValueError("gamma must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def is_constant(self) -> bool:
        return np.ndim(self.values) == 0

    def on(self, geometry: GridGeometry) -> np.ndarray:
        """Broadcast to a full array on ``geometry``."""
        if self.is_constant:
            return np.full(geometry.dims, self.values)
        if self.values.shape != geometry.dims:
            raise ValueError(f"gamma shape {self.values.shape} does not match grid {geometry.dims}")
        return self.values

    def mass(self, geometry: GridGeometry) -> float:
        """Total mass gamma(Omega)."""
        return float(np.sum(self.on(geometry))) * geometry.cell_measure


def gamma_array(gamma, geometry: GridGeometry) -> np.ndarray:
    """Coerce a constant, array, ScalarGrid or GammaMap to a validated array."""
    if not isinstance(gamma, GammaMap):
        gamma = GammaMap(gamma)
    return gamma.on(geometry)


@dataclass(frozen=True)
class RegularizerSpec:
    kind: str
    gamma: GammaMap | None = None
    beta: float = 1.25

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in REG_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}; expected one of {REG_KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == "TV_PWL":
            if self.gamma is None:
                raise ValueError("TV_PWL requires gamma")
            if not isinstance(self.gamma, GammaMap):
                object.__setattr__(self, "gamma", GammaMap(self.gamma))
        if not self.beta > 0:
            raise ValueError("beta must be positive")


# ---------------------------------------------------------------------------
# pointwise kernels on bare arrays (leading axis = components)
# ---------------------------------------------------------------------------


def _norms(p: np.ndarray, weights=None) -> np.ndarray:
    if weights is None:
        return np.sqrt(np.sum(p * p, axis=0))
    return np.sqrt(np.tensordot(weights, p * p, axes=1))


def ball_project_arr(p: np.ndarray, radius, weights=None) -> np.ndarray:
    n = _norms(p, weights)
    scale = np.minimum(1.0, radius / np.maximum(n, np.finfo(float).tiny))
    return p * scale


def shrink_clip(p: np.ndarray, shift, radius) -> np.ndarray:
    """Radial shrink by ``shift`` followed by clipping to ``radius``."""
    n = _norms(p)
    m = np.minimum(np.maximum(n - shift, 0.0), radius)
    scale = np.where(n > 0, m / np.where(n > 0, n, 1.0), 0.0)
    return p * scale


# ---------------------------------------------------------------------------
# values
# ---------------------------------------------------------------------------


def tv_value(u: ScalarGrid) -> float:
    g = u.geometry
    return float(np.sum(_norms(grad_arr(u.values, g.spacing)))) * g.cell_measure


def tvpwl_value(u: ScalarGrid, gamma) -> float:
    g = u.geometry
    gam = gamma_array(gamma, g)
    excess = np.maximum(_norms(grad_arr(u.values, g.spacing)) - gam, 0.0)
    return float(np.sum(excess)) * g.cell_measure


def tvpwl_argmin_g(u: ScalarGrid, gamma) -> VectorGrid:
    """Optimal auxiliary field: ``grad u`` radially projected onto the gamma balls."""
    g = u.geometry
    gam = gamma_array(gamma, g)
    return VectorGrid(g, ball_project_arr(grad_arr(u.values, g.spacing), gam))


# ---------------------------------------------------------------------------
# proximal maps
# ---------------------------------------------------------------------------


def prox_dual_tvpwl(p: VectorGrid, s: float, alpha: float, gamma) -> VectorGrid:
    """Prox of ``s`` times the conjugate of ``alpha * (|z| - gamma)_+``.

    The conjugate is ``gamma |p|`` restricted to ``|p| <= alpha``, so the prox
    shrinks each vector by ``s * gamma_i`` and then clips it to length ``alpha``.
    """
    if not s > 0 or not alpha > 0:
        raise ValueError("s and alpha must be positive")
    g = p.geometry
    gam = gamma_array(gamma, g)
    return VectorGrid(g, shrink_clip(p.components, s * gam, alpha))


def project_dual_ball(p: VectorGrid | SymTensorGrid, radius: float):
    if not radius > 0:
        raise ValueError("radius must be positive")
    weights = TENSOR_WEIGHTS if isinstance(p, SymTensorGrid) else None
    return type(p)(p.geometry, ball_project_arr(p.components, radius, weights))


def project_l2_ball(u: ScalarGrid, f: ScalarGrid, eps: float) -> ScalarGrid:
    """Project ``u`` onto ``{v : ||v - f||_2 <= eps}`` (plain Euclidean norm)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if u.geometry != f.geometry:
        raise ValueError("geometry mismatch")
    return u.with_values(_project_l2_ball_arr(u.values, f.values, eps))


def _project_l2_ball_arr(u: np.ndarray, f: np.ndarray, eps: float) -> np.ndarray:
    r = u - f
    nr = np.linalg.norm(r)
    if nr <= eps:
        return u
    return f + (eps / nr) * r


# ---------------------------------------------------------------------------
# TGV2
# ---------------------------------------------------------------------------


def _sym_ops(geometry: GridGeometry):
    """Symmetrized gradient, its negative adjoint and pointwise weights.

    In 1D the symmetrized gradient of a scalar field is its forward difference.
    """
    sp = geometry.spacing
    if geometry.ndim == 1:
        return (lambda w: grad_arr(w[0], sp)), (lambda q: div_arr(q, sp)[None]), None
    return (lambda w: sym_grad_arr(w, sp)), (lambda q: sym_div_arr(q, sp)), TENSOR_WEIGHTS


def tgv2_value(
    u: ScalarGrid,
    beta: float = 1.25,
    inner_iters: int = 500,
    return_info: bool = False,
):
    """Second-order TGV with weights ``(1, beta)``, via a finite inner solve.

    Minimizes ``||grad u - w||_1 + beta ||E w||_1`` over ``w`` with a
    primal-dual iteration started at ``w = 0``.  The returned value is the
    smallest primal objective seen, so it is at most ``tv_value(u)`` and
    nonincreasing in ``inner_iters``.  With ``return_info`` a dict carrying a
    dual lower bound and the resulting gap is returned as well.
    """
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    if not beta > 0:
        raise ValueError("beta must be positive")
    g = u.geometry
    d = g.ndim
    E, Et_neg, tw = _sym_ops(g)
    du = grad_arr(u.values, g.spacing)
    cm = g.cell_measure

    def primal(w):
        return (np.sum(_norms(du - w)) + beta * np.sum(_norms(E(w), tw))) * cm

    # w -> (w, E w); the tensor block of the dual space carries the xy-weighted
    # pairing, under which the adjoint is (p, q) -> p - symdiv q
    def K(w):
        return np.concatenate([w, E(w)])

    def Kt(y):
        return y[:d] - Et_neg(y[d:])

    L = 1.01 * op_norm_estimate(K, Kt, du.shape, iters=100)
    tau = sigma = 0.99 / L
    w = np.zeros_like(du)
    w_bar = w.copy()
    y = np.zeros((d + (1 if d == 1 else 3),) + g.dims)
    best = primal(w)
    lower = 0.0
    for _ in range(inner_iters):
        y = y + sigma * K(w_bar)
        # prox of sigma F*, F(a, b) = ||du - a|| + beta ||b||
        y[:d] = ball_project_arr(y[:d] - sigma * du, 1.0)
        y[d:] = ball_project_arr(y[d:], beta, tw)
        w_new = w - tau * Kt(y)
        w_bar = 2.0 * w_new - w
        w = w_new
        best = min(best, primal(w))
    # feasible dual point: p = -symdiv q with |q| <= beta, rescaled into |p| <= 1
    q = ball_project_arr(y[d:], beta, tw)
    p = -Et_neg(q)
    pmax = float(np.max(_norms(p)))
    t = 1.0 if pmax <= 1.0 else 1.0 / pmax
    lower = max(0.0, t * float(np.sum(du * p)) * cm)
    if return_info:
        return best, {"dual_lower_bound": lower, "gap": best - lower, "inner_iters": inner_iters}
    return best
