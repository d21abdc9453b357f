"""
Increment calculus on a time grid.

2-increments g_{ts} are stored densely as arrays indexed [t, s, ...] over
grid indices, with the Galerkin index (if any) following the two time axes.
Only the entries with t >= s carry meaning; the others are kept at zero.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

try:
    from config.settings import SEWING_MAX_DEPTH, SEWING_TOL
except ImportError:
    SEWING_TOL = 1e-9
    SEWING_MAX_DEPTH = 16

from .errors import ArgumentError, ConvergenceError
from .fbm_gaussian import QFbmPath, TimeGrid, TraceClassSpec
from .semigroup_spectral import SpectralSemigroup

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Increment2:
    """Two-parameter increment g_{ts} on grid pairs."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = self.grid.points.size
        if values.shape[:2] != (n, n):
            raise ArgumentError(f"increment values must start with shape {(n, n)}, got {values.shape}")
        object.__setattr__(self, "values", values)

    def at(self, t_index: int, s_index: int) -> np.ndarray:
        return self.values[t_index, s_index]

    def __mul__(self, c: float) -> "Increment2":
        return Increment2(self.grid, c * self.values)

    __rmul__ = __mul__


def _path_array(f, grid: TimeGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.points.size:
        raise ArgumentError(f"path has {f.shape[0]} values, grid has {grid.points.size} points")
    return f


def _lower_mask(grid: TimeGrid, trailing: int) -> np.ndarray:
    n = grid.points.size
    mask = np.tri(n, n, dtype=bool)
    return mask.reshape(mask.shape + (1,) * trailing)


def _pair_factors(S: SpectralSemigroup, grid: TimeGrid) -> np.ndarray:
    """exp(-mu (t - s)) for all pairs t >= s, shape (K+1, K+1, N); zero above the diagonal."""
    t = grid.points
    gap = np.clip(t[:, None] - t[None, :], 0.0, None)
    factors = np.exp(-gap[:, :, None] * S.eigenvalues[None, None, :])
    return factors * _lower_mask(grid, 1)


def _act(factors: np.ndarray, v: np.ndarray, lead: int) -> np.ndarray:
    """Diagonal action of factors (.., N) on v whose Galerkin axis sits at position `lead`."""
    extra = v.ndim - lead - 1
    return factors.reshape(factors.shape + (1,) * extra) * v


def delta_1(f, grid: TimeGrid) -> Increment2:
    """(delta f)_{ts} = f_t - f_s."""
    f = _path_array(f, grid)
    values = f[:, None] - f[None, :]
    return Increment2(grid, values * _lower_mask(grid, f.ndim - 1))


def delta_hat_1(f, S: SpectralSemigroup, grid: TimeGrid) -> Increment2:
    """(delta-hat f)_{ts} = f_t - S(t-s) f_s."""
    f = _path_array(f, grid)
    if f.ndim < 2 or f.shape[1] != S.N:
        raise ArgumentError(f"path values must carry the Galerkin index of size {S.N} on axis 1")
    transported = _act(_pair_factors(S, grid), np.broadcast_to(f[None], (f.shape[0],) + f.shape), 2)
    values = (f[:, None] - transported) * _lower_mask(grid, f.ndim - 1)
    return Increment2(grid, values)


def delta_2(g: Increment2) -> np.ndarray:
    """(delta g)_{tsu} = g_{tu} - g_{ts} - g_{su}, as an array [t, s, u, ...]."""
    v = g.values
    out = v[:, None, :] - v[:, :, None] - v[None, :, :]
    return out * _triple_mask(g.grid, v.ndim - 2)


def delta_hat_2(g: Increment2, S: SpectralSemigroup) -> np.ndarray:
    """(delta-hat g)_{tsu} = g_{tu} - g_{ts} - S(t-s) g_{su}, as an array [t, s, u, ...]."""
    v = g.values
    if v.ndim < 3 or v.shape[2] != S.N:
        raise ArgumentError(f"increment values must carry the Galerkin index of size {S.N}")
    factors = _pair_factors(S, g.grid)[:, :, None, :]
    transported = _act(factors, v[None, :, :], 3)
    out = v[:, None, :] - v[:, :, None] - transported
    return out * _triple_mask(g.grid, v.ndim - 2)


def _triple_mask(grid: TimeGrid, trailing: int) -> np.ndarray:
    n = grid.points.size
    i = np.arange(n)
    mask = (i[:, None, None] >= i[None, :, None]) & (i[None, :, None] >= i[None, None, :])
    return mask.reshape(mask.shape + (1,) * trailing)


def holder_norm(g: Increment2, mu: float, alpha: float = 0.0, semigroup: Optional[SpectralSemigroup] = None) -> float:
    """||g||_{mu,alpha} = max over grid pairs t > s of |g_{ts}|_alpha / (t-s)^mu."""
    if mu < 0:
        raise ArgumentError(f"Holder exponent must be non-negative, got {mu}")
    v = g.values
    if alpha != 0.0:
        if semigroup is None:
            raise ArgumentError("a semigroup is needed for alpha != 0")
        weights = semigroup.power_factors(alpha)
        v = _act(weights[None, None, :], v, 2)
    sizes = np.sqrt(np.sum(v.reshape(v.shape[:2] + (-1,)) ** 2, axis=2))
    t = g.grid.points
    gap = t[:, None] - t[None, :]
    lower = gap > 0
    if not np.any(lower):
        return 0.0
    return float(np.max(sizes[lower] / gap[lower] ** mu))


@dataclass(frozen=True, eq=False)
class RegularizedNoise:
    """
    The operators X^i_{ts} = sqrt(lambda_i) (beta^i_t - beta^i_s) S(t-s).

    Each X^i_{ts} is diagonal in the Galerkin basis and is represented by its
    diagonal; nothing is materialized until asked for.
    """

    semigroup: SpectralSemigroup
    path: QFbmPath

    def diagonal(self, mode: int, t_index: int, s_index: int) -> np.ndarray:
        t = self.path.grid.points
        if t_index < s_index:
            raise ArgumentError("regularized noise is defined for t >= s")
        beta = self.path.values[mode]
        scale = self.path.spec.sqrt_weights[mode] * (beta[t_index] - beta[s_index])
        return scale * self.semigroup.factors(t[t_index] - t[s_index])

    def increment(self, mode: int) -> Increment2:
        """X^mode as an Increment2 of diagonals."""
        beta = self.path.values[mode]
        scale = self.path.spec.sqrt_weights[mode] * (beta[:, None] - beta[None, :])
        return Increment2(self.path.grid, scale[:, :, None] * _pair_factors(self.semigroup, self.path.grid))

    def apply(self, mode: int, t_index: int, s_index: int, z: np.ndarray) -> np.ndarray:
        return _act(self.diagonal(mode, t_index, s_index), np.asarray(z, dtype=float), 0)

    def chen_residual(self, mode: Optional[int] = None) -> float:
        """
        max over grid triples of |(delta-hat X)_{tsu} - X_{ts} a_{su}| / max |X|,
        with a_{su} = S(s-u) - Id.
        """
        grid = self.path.grid
        modes = range(self.path.spec.M) if mode is None else [mode]
        a = _pair_factors(self.semigroup, grid) - _lower_mask(grid, 1)
        worst = 0.0
        for i in modes:
            X = self.increment(i)
            scale = float(np.max(np.abs(X.values)))
            if scale == 0.0:
                continue
            lhs = delta_hat_2(X, self.semigroup)
            rhs = X.values[:, :, None, :] * a[None, :, :, :]
            rhs = rhs * _triple_mask(grid, 1)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
        return worst


# Convolutional Young integral

def _riemann_sum(S: SpectralSemigroup, t: float, u: np.ndarray, z: np.ndarray, x: np.ndarray,
                 weights: np.ndarray, germ: str) -> np.ndarray:
    """
    sum_i w_i sum_k germ_k, with u (n+1,), z (n+1, M, N), x (n+1, M).
    """
    transport = np.exp(-np.outer(t - u, S.eigenvalues))  # (n+1, N)
    dx = np.diff(x, axis=0) * weights[None, :]  # (n, M)
    left = np.einsum("kn,kmn,km->n", transport[:-1], z[:-1], dx)
    if germ == "left":
        return left
    right = np.einsum("kn,kmn,km->n", transport[1:], z[1:], dx)
    return 0.5 * (left + right)


def _grid_levels(S: SpectralSemigroup, x: QFbmPath, z: np.ndarray, s: float, t: float, germ: str) -> list:
    """Riemann sums on the grid cells and on every dyadic coarsening the cell count allows, finest first."""
    grid = x.grid
    i0, i1 = grid.index_of(s), grid.index_of(t)
    z = np.asarray(z, dtype=float)
    if z.shape != (x.spec.M, grid.points.size, S.N):
        raise ArgumentError(f"z must have shape {(x.spec.M, grid.points.size, S.N)}, got {z.shape}")
    u = grid.points[i0:i1 + 1]
    zk = np.transpose(z[:, i0:i1 + 1], (1, 0, 2))
    xk = x.values[:, i0:i1 + 1].T
    sums = []
    stride, cells = 1, i1 - i0
    while True:
        sums.append(_riemann_sum(S, t, u[::stride], zk[::stride], xk[::stride], x.spec.sqrt_weights, germ))
        if (cells // stride) % 2:
            return sums
        stride *= 2


def _callable_levels(S: SpectralSemigroup, z: Callable, x: Callable, s: float, t: float,
                     weights: Optional[np.ndarray], germ: str, max_depth: int):
    """Riemann sums on 2**level uniform cells, level = 0..max_depth."""
    w = None if weights is None else np.asarray(weights, dtype=float)
    for level in range(max_depth + 1):
        u = np.linspace(s, t, 2 ** level + 1)
        xk = np.array([np.atleast_1d(x(ui)) for ui in u], dtype=float)
        zk = np.array([np.atleast_2d(z(ui)) for ui in u], dtype=float)
        if w is None:
            w = np.ones(xk.shape[1])
        yield _riemann_sum(S, t, u, zk, xk, w, germ)


def _check_limits(s: float, t: float, germ: str):
    if germ not in ("trapezoid", "left"):
        raise ArgumentError(f"unknown germ {germ!r}")
    if not s < t:
        raise ArgumentError(f"convolution integral needs s < t, got s={s}, t={t}")


def refinement_differences(
    S: SpectralSemigroup,
    z: Union[np.ndarray, Callable[[float], np.ndarray]],
    x: Union[QFbmPath, Callable[[float], np.ndarray]],
    s: float,
    t: float,
    depth: int = 8,
    weights: Optional[np.ndarray] = None,
    germ: str = "trapezoid",
) -> np.ndarray:
    """
    E-norm gaps between successive dyadic levels, coarsest pair first.

    Callable inputs are refined from 1 to 2**depth cells. Grid data uses the
    coarsenings its cell count supports, so `depth` is ignored there.
    """
    _check_limits(s, t, germ)
    if isinstance(x, QFbmPath):
        sums = _grid_levels(S, x, z, s, t, germ)[::-1]
    else:
        sums = list(_callable_levels(S, z, x, s, t, weights, germ, depth))
    return np.array([np.linalg.norm(b - a) for a, b in zip(sums[:-1], sums[1:])])


def convolution_integral(
    S: SpectralSemigroup,
    z: Union[np.ndarray, Callable[[float], np.ndarray]],
    x: Union[QFbmPath, Callable[[float], np.ndarray]],
    s: float,
    t: float,
    tol: Optional[float] = None,
    weights: Optional[np.ndarray] = None,
    max_depth: int = SEWING_MAX_DEPTH,
    germ: str = "trapezoid",
) -> np.ndarray:
    """
    sum_i sqrt(lambda_i) int_s^t S(t-u) z^i_u dx^i_u as a limit of compensated
    Riemann sums.

    Args:
        S: semigroup of the Galerkin truncation
        z: either node values of shape (M, K+1, N) on the path's grid, or a
            callable u -> (M, N)
        x: either a QFbmPath or a callable u -> (M,) (then `weights` gives the
            sqrt(lambda_i), default all ones)
        s, t: integration limits, s < t (grid points for grid data)
        tol: callables stop when successive dyadic levels differ by less than
            this (default SEWING_TOL). Grid data returns the grid-resolution
            sum; with an explicit tol the gap to the half-resolution sum must
            also fall below it.
        germ: "trapezoid" (default) or "left"

    Returns:
        GalerkinVector of length N

    Raises:
        ConvergenceError: the refinement does not settle below tol
    """
    _check_limits(s, t, germ)

    if isinstance(x, QFbmPath):
        sums = _grid_levels(S, x, z, s, t, germ)
        if tol is None:
            return sums[0]
        if len(sums) == 1:
            raise ConvergenceError(
                f"an odd number of grid cells between s={s} and t={t} leaves no coarser level to compare",
                last_levels=(),
            )
        history = [float(np.linalg.norm(a - b)) for a, b in zip(sums[:-1], sums[1:])][::-1]
        if history[-1] >= tol:
            raise ConvergenceError(
                f"grid-resolution sum still moves by {history[-1]:.3e} (tol {tol:.1e}); last differences {history[-2:]}",
                last_levels=tuple(history[-2:]),
            )
        return sums[0]

    tol = SEWING_TOL if tol is None else tol
    previous = None
    history = []
    for level, current in enumerate(_callable_levels(S, z, x, s, t, weights, germ, max_depth)):
        if previous is not None:
            gap = float(np.linalg.norm(current - previous))
            history.append(gap)
            if gap < tol:
                logger.debug(f"Convolution integral converged at level {level} (gap {gap:.2e})")
                return current
        previous = current
    raise ConvergenceError(
        f"dyadic refinement did not converge within depth {max_depth}: "
        f"last differences {history[-2:]}",
        last_levels=tuple(history[-2:]),
    )


def truncation_tail_bound(spec: TraceClassSpec, path_norm: float) -> float:
    """sum_{i > M} sqrt(lambda_i) * path_norm for the generating power law."""
    if path_norm == 0:
        return 0.0
    return spec.sqrt_tail() * float(path_norm)
