"""Grid containers and discrete differential operators.

Gradients are forward differences with a homogeneous Neumann condition: the
last difference along every axis is zero.  Divergences are defined as the
exact negative adjoints, so that

    <grad u, p> = -<u, div p>

holds to rounding error for every pair ``(u, p)`` on the same geometry.  The
same relation ties :func:`sym_grad` to :func:`sym_div`.

Every grid type wraps a plain :class:`numpy.ndarray`.  The ``*_arr`` kernels
operate on bare arrays and are what the solvers call in their inner loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridGeometry",
    "ScalarGrid",
    "VectorGrid",
    "SymTensorGrid",
    "as_scalar_grid",
    "grad",
    "div",
    "sym_grad",
    "sym_div",
    "pointwise_norm",
    "inner",
    "op_norm_estimate",
    "grad_arr",
    "div_arr",
    "sym_grad_arr",
    "sym_div_arr",
    "TENSOR_WEIGHTS",
]

# Off-diagonal entry of a symmetric 2x2 tensor appears twice in the full matrix.
TENSOR_WEIGHTS = np.array([1.0, 1.0, 2.0])


@dataclass(frozen=True)
class GridGeometry:
    """Extents and spacings of a uniform 1D or 2D grid."""

    dims: tuple[int, ...]
    spacing: tuple[float, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got dims={dims}")
        if any(n < 2 for n in dims):
            raise ValueError(f"every extent must be >= 2, got dims={dims}")
        spacing = tuple(float(h) for h in self.spacing) if self.spacing else (1.0,) * len(dims)
        if len(spacing) != len(dims):
            raise ValueError("spacing must have one entry per axis")
        if not all(np.isfinite(h) and h > 0 for h in spacing):
            raise ValueError(f"spacings must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacing))


def _checked(values: np.ndarray, shape: tuple[int, ...], what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what}: values must be finite")
    return values


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    """Real samples on a grid (signals, images, gamma maps, residuals)."""

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _checked(self.values, self.geometry.dims, "ScalarGrid"))

    def with_values(self, values) -> "ScalarGrid":
        return ScalarGrid(self.geometry, values)

    def __repr__(self):
        return f"ScalarGrid(dims={self.geometry.dims}, spacing={self.geometry.spacing})"


@dataclass(frozen=True, eq=False)
class VectorGrid:
    """Per-node d-vector field; ``components[k]`` is the axis-k component."""

    geometry: GridGeometry
    components: np.ndarray

    def __post_init__(self):
        shape = (self.geometry.ndim,) + self.geometry.dims
        object.__setattr__(self, "components", _checked(self.components, shape, "VectorGrid"))

    def __repr__(self):
        return f"VectorGrid(dims={self.geometry.dims}, spacing={self.geometry.spacing})"


@dataclass(frozen=True, eq=False)
class SymTensorGrid:
    """Symmetric 2x2 tensor field stored as ``components = [xx, yy, xy]``."""

    geometry: GridGeometry
    components: np.ndarray

    def __post_init__(self):
        if self.geometry.ndim != 2:
            raise ValueError("SymTensorGrid requires a 2D geometry")
        shape = (3,) + self.geometry.dims
        object.__setattr__(self, "components", _checked(self.components, shape, "SymTensorGrid"))

    @property
    def xx(self) -> np.ndarray:
        return self.components[0]

    @property
    def yy(self) -> np.ndarray:
        return self.components[1]

    @property
    def xy(self) -> np.ndarray:
        return self.components[2]

    def __repr__(self):
        return f"SymTensorGrid(dims={self.geometry.dims}, spacing={self.geometry.spacing})"


def as_scalar_grid(values, spacing: Sequence[float] | float | None = None) -> ScalarGrid:
    """Wrap an array (or pass a ScalarGrid through unchanged)."""
    if isinstance(values, ScalarGrid):
        return values
    values = np.asarray(values, dtype=float)
    if spacing is None:
        spacing = ()
    elif np.isscalar(spacing):
        spacing = (float(spacing),) * values.ndim
    return ScalarGrid(GridGeometry(values.shape, tuple(spacing)), values)


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------


def _fwd(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    d = np.zeros_like(u)
    hi = [slice(None)] * u.ndim
    lo = [slice(None)] * u.ndim
    hi[axis] = slice(1, None)
    lo[axis] = slice(None, -1)
    d[tuple(lo)] = (u[tuple(hi)] - u[tuple(lo)]) / h
    return d


def _bwd(p: np.ndarray, axis: int, h: float) -> np.ndarray:
    # Negative adjoint of _fwd along one axis.
    n = p.shape[axis]
    d = np.empty_like(p)

    def sl(s):
        idx = [slice(None)] * p.ndim
        idx[axis] = s
        return tuple(idx)

    d[sl(slice(0, 1))] = p[sl(slice(0, 1))]
    d[sl(slice(1, n - 1))] = p[sl(slice(1, n - 1))] - p[sl(slice(0, n - 2))]
    d[sl(slice(n - 1, n))] = -p[sl(slice(n - 2, n - 1))]
    return d / h


def grad_arr(u: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Forward-difference gradient of a bare array, shape ``(d, *u.shape)``."""
    return np.stack([_fwd(u, k, spacing[k]) for k in range(u.ndim)])


def div_arr(p: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    out = _bwd(p[0], 0, spacing[0])
    for k in range(1, p.shape[0]):
        out += _bwd(p[k], k, spacing[k])
    return out


def sym_grad_arr(w: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Symmetrized gradient ``[xx, yy, xy]`` of a 2D vector field array."""
    hx, hy = spacing
    xx = _fwd(w[0], 0, hx)
    yy = _fwd(w[1], 1, hy)
    xy = 0.5 * (_fwd(w[0], 1, hy) + _fwd(w[1], 0, hx))
    return np.stack([xx, yy, xy])


def sym_div_arr(q: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    hx, hy = spacing
    # Adjoint under the pairing that weights xy twice.
    first = _bwd(q[0], 0, hx) + _bwd(q[2], 1, hy)
    second = _bwd(q[2], 0, hx) + _bwd(q[1], 1, hy)
    return np.stack([first, second])


# ---------------------------------------------------------------------------
# grid operators
# ---------------------------------------------------------------------------


def _same_geometry(a: GridGeometry, b: GridGeometry):
    if a != b:
        raise ValueError(f"geometry mismatch: {a} vs {b}")


def grad(u: ScalarGrid) -> VectorGrid:
    g = u.geometry
    return VectorGrid(g, grad_arr(u.values, g.spacing))


def div(p: VectorGrid, geometry: GridGeometry | None = None) -> ScalarGrid:
    """Divergence, the negative adjoint of :func:`grad`.

    ``geometry`` is optional; when given it must equal ``p.geometry``.
    """
    if not isinstance(p, VectorGrid):
        raise TypeError("div expects a VectorGrid")
    if geometry is not None:
        _same_geometry(geometry, p.geometry)
    g = p.geometry
    return ScalarGrid(g, div_arr(p.components, g.spacing))


def sym_grad(w: VectorGrid) -> SymTensorGrid:
    g = w.geometry
    if g.ndim != 2:
        raise ValueError("sym_grad is only defined on 2D grids")
    return SymTensorGrid(g, sym_grad_arr(w.components, g.spacing))


def sym_div(q: SymTensorGrid, geometry: GridGeometry | None = None) -> VectorGrid:
    if not isinstance(q, SymTensorGrid):
        raise TypeError("sym_div expects a SymTensorGrid")
    if geometry is not None:
        _same_geometry(geometry, q.geometry)
    g = q.geometry
    return VectorGrid(g, sym_div_arr(q.components, g.spacing))


def pointwise_norm(p: VectorGrid | SymTensorGrid) -> ScalarGrid:
    """Pointwise Euclidean norm; Frobenius norm for symmetric tensors."""
    comps = p.components
    if isinstance(p, SymTensorGrid):
        sq = np.tensordot(TENSOR_WEIGHTS, comps**2, axes=1)
    else:
        sq = np.sum(comps**2, axis=0)
    return ScalarGrid(p.geometry, np.sqrt(sq))


def inner(a, b) -> float:
    """Grid inner product, scaled by the cell measure.

    Tensor fields pair their ``xy`` entries with weight 2, matching
    :func:`pointwise_norm`.
    """
    if type(a) is not type(b):
        raise TypeError(f"cannot pair {type(a).__name__} with {type(b).__name__}")
    _same_geometry(a.geometry, b.geometry)
    if isinstance(a, ScalarGrid):
        s = np.sum(a.values * b.values)
    elif isinstance(a, SymTensorGrid):
        s = np.sum(np.tensordot(TENSOR_WEIGHTS, a.components * b.components, axes=1))
    else:
        s = np.sum(a.components * b.components)
    return float(s) * a.geometry.cell_measure


def op_norm_estimate(
    apply_K: Callable[[np.ndarray], np.ndarray],
    apply_Kt: Callable[[np.ndarray], np.ndarray],
    geometry: GridGeometry | tuple[int, ...],
    iters: int = 100,
    seed: int = 0,
) -> float:
    """Power-iteration estimate of the largest singular value of ``K``.

    ``apply_K`` and ``apply_Kt`` act on bare arrays; ``geometry`` gives the
    shape of the input space (a :class:`GridGeometry` means a scalar grid).
    The estimate is a Rayleigh quotient of ``K^T K`` and never exceeds the
    true norm; on a fixed seed it is nondecreasing in ``iters``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    shape = geometry.dims if isinstance(geometry, GridGeometry) else tuple(geometry)
    x = np.random.default_rng(seed).standard_normal(shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = apply_Kt(apply_K(x))
        est = max(float(np.vdot(x, y)), 0.0)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
    return float(np.sqrt(est))
