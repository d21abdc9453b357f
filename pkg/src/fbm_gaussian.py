"""
Gaussian space of fractional Brownian motion with Hurst index 1/2 < H < 1.

This module provides the covariance R_H, the Volterra kernel K_H and its
adjoint K*_H, the inner product of the Hilbert space H, the right-sided
fractional integral, exact samplers for scalar FBM and trace-class Q-FBM,
and the Cameron-Martin lift R_H = K_H o K*_H.

Sampled functions (test functions, directions) are piecewise constant on the
cells of a TimeGrid and are stored as one value per cell.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from numpy.fft import fft
from scipy import integrate, linalg, special

try:
    from config.settings import (
        CHOLESKY_JITTER, CHOLESKY_JITTER_ATTEMPTS, CIRCULANT_MIN_POINTS
    )
except ImportError:
    CHOLESKY_JITTER = 1e-12
    CHOLESKY_JITTER_ATTEMPTS = 4
    CIRCULANT_MIN_POINTS = 512

from .errors import ArgumentError, SamplerError

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class HurstParam:
    """Hurst index H in the open interval (1/2, 1)."""

    H: float

    def __post_init__(self):
        H = float(self.H)
        if not 0.5 < H < 1.0:
            raise ArgumentError(f"Hurst index must lie in (1/2, 1), got {H}")
        object.__setattr__(self, "H", H)

    @property
    def alpha(self) -> float:
        """alpha_H = H(2H - 1), the constant of the H inner product."""
        return self.H * (2.0 * self.H - 1.0)

    @property
    def a(self) -> float:
        """Fractional order H - 1/2."""
        return self.H - 0.5


def as_hurst(H: Union[HurstParam, float]) -> HurstParam:
    return H if isinstance(H, HurstParam) else HurstParam(H)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Discretization 0 = t_0 < t_1 < ... < t_K = T of [0, T]."""

    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.points, dtype=float).ravel()
        if t.size < 2:
            raise ArgumentError("a time grid needs at least two points")
        if t[0] != 0.0:
            raise ArgumentError(f"time grid must start at 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise ArgumentError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "points", t)

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        if horizon <= 0:
            raise ArgumentError(f"horizon must be positive, got {horizon}")
        if int(steps) != steps or steps < 1:
            raise ArgumentError(f"steps must be a positive integer, got {steps}")
        return cls(np.linspace(0.0, float(horizon), int(steps) + 1))

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def steps(self) -> int:
        return int(self.points.size - 1)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.points[:-1] + self.points[1:])

    @property
    def is_uniform(self) -> bool:
        w = self.widths
        return bool(np.allclose(w, w[0], rtol=1e-12, atol=0.0))

    @property
    def dt(self) -> float:
        if not self.is_uniform:
            raise ArgumentError("dt is only defined on uniform grids")
        return float(self.horizon / self.steps)

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to t (up to rounding)."""
        idx = int(np.searchsorted(self.points, t - 1e-12 * max(1.0, self.horizon)))
        if idx >= self.points.size or not np.isclose(self.points[idx], t, rtol=1e-12, atol=1e-14):
            raise ArgumentError(f"time {t} is not a grid point")
        return idx

    def coarsen(self, factor: int) -> "TimeGrid":
        if factor < 1 or self.steps % factor:
            raise ArgumentError(f"cannot coarsen {self.steps} steps by {factor}")
        return TimeGrid(self.points[::factor])

    def indicator(self, t: float) -> np.ndarray:
        """Cell values of 1_{[0,t]} for a grid point t."""
        k = self.index_of(t)
        f = np.zeros(self.steps)
        f[:k] = 1.0
        return f


@dataclass(frozen=True, eq=False)
class TraceClassSpec:
    """Eigenvalues lambda_1 >= lambda_2 >= ... > 0 of the covariance operator Q."""

    eigenvalues: np.ndarray
    decay: Optional[float] = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        if lam.size < 1:
            raise ArgumentError("at least one noise mode is required")
        if np.any(lam <= 0):
            raise ArgumentError("all eigenvalues of Q must be strictly positive")
        if np.any(np.diff(lam) > 0):
            raise ArgumentError("eigenvalues of Q must be non-increasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def power_law(cls, modes: int, decay: float = 3.0) -> "TraceClassSpec":
        """lambda_i = i^{-decay}; sum sqrt(lambda_i) converges for decay > 2."""
        if int(modes) != modes or modes < 1:
            raise ArgumentError(f"mode count must be a positive integer, got {modes}")
        i = np.arange(1, int(modes) + 1, dtype=float)
        return cls(i ** (-float(decay)), decay=float(decay))

    @property
    def M(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def sqrt_tail(self) -> float:
        """sum_{i > M} sqrt(lambda_i) for the generating power law (inf if unknown)."""
        if self.decay is None or self.decay <= 2.0:
            return float("inf")
        return float(special.zeta(self.decay / 2.0, self.M + 1))


def holder_seminorm(values: np.ndarray, grid: TimeGrid, gamma: float, delta: float) -> float:
    """sup |w(t)-w(s)| / (|t-s|^gamma (1+t+s)^delta) over grid pairs."""
    t = grid.points
    w = np.asarray(values, dtype=float)
    diff = np.abs(w[:, None] - w[None, :])
    gap = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gap, 1.0)
    weight = gap ** gamma * (1.0 + t[:, None] + t[None, :]) ** delta
    ratio = diff / weight
    np.fill_diagonal(ratio, 0.0)
    return float(ratio.max())


@dataclass(frozen=True, eq=False)
class QFbmPath:
    """Per-mode scalar FBM paths beta^i(t_k), stored as an (M, K+1) array."""

    spec: TraceClassSpec
    grid: TimeGrid
    values: np.ndarray
    hurst: HurstParam

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.spec.M, self.grid.points.size):
            raise ArgumentError(
                f"path values must have shape {(self.spec.M, self.grid.points.size)}, got {values.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def increments(self) -> np.ndarray:
        """(M, K) array of beta^i_{k+1} - beta^i_k."""
        return np.diff(self.values, axis=1)

    def weighted_holder_norm(self, gamma: float, delta: float) -> float:
        """Grid version of sum_i sqrt(lambda_i) ||beta^i||_{W^{gamma,delta}_T}."""
        norms = [holder_seminorm(row, self.grid, gamma, delta) for row in self.values]
        return float(np.dot(self.spec.sqrt_weights, norms))

    def shifted(self, direction: "QFbmPath", eps: float) -> "QFbmPath":
        """The path omega + eps * direction."""
        if direction.values.shape != self.values.shape:
            raise ArgumentError("direction and path live on different grids or mode counts")
        return QFbmPath(self.spec, self.grid, self.values + eps * direction.values, self.hurst)

    def coarsen(self, factor: int) -> "QFbmPath":
        """Restriction to every factor-th grid point; still an exact FBM sample."""
        return QFbmPath(self.spec, self.grid.coarsen(factor), self.values[:, ::factor], self.hurst)


# Covariance and kernels

def covariance_rh(s, t, H: Union[HurstParam, float]):
    """R_H(s,t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2."""
    h2 = 2.0 * as_hurst(H).H
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ArgumentError("covariance_rh is defined for non-negative times")
    out = 0.5 * (s ** h2 + t ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def covariance_matrix(grid: TimeGrid, H: Union[HurstParam, float]) -> np.ndarray:
    """[R_H(t_j, t_k)] for the non-zero grid points t_1..t_K."""
    t = grid.points[1:]
    return covariance_rh(t[:, None], t[None, :], H)


def hurst_constant(H: Union[HurstParam, float]) -> float:
    """c_H = (H(2H-1) / B(2-2H, H-1/2))^{1/2}."""
    hp = as_hurst(H)
    return float(np.sqrt(hp.alpha / special.beta(2.0 - 2.0 * hp.H, hp.a)))


def kernel_kh(t: float, s: float, H: Union[HurstParam, float]) -> float:
    """
    Volterra kernel K_H(t,s) = c_H s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du.

    The endpoint singularity is removed with u = s + v^2, which leaves the
    integrable weight v^{2H-2}; that weight is handed to QUADPACK's algebraic
    endpoint rule.
    """
    hp = as_hurst(H)
    if not 0.0 < s < t:
        raise ArgumentError(f"kernel_kh needs 0 < s < t, got s={s}, t={t}")
    upper = np.sqrt(t - s)
    value, _ = integrate.quad(
        lambda v: 2.0 * (s + v * v) ** hp.a,
        0.0,
        upper,
        weight="alg",
        wvar=(2.0 * hp.H - 2.0, 0.0),
    )
    return hurst_constant(hp) * s ** (-hp.a) * value


def kernel_kh_matrix(t, s, H: Union[HurstParam, float]) -> np.ndarray:
    """
    Vectorized K_H(t,s), zero where s >= t.

    Closed form: K_H(t,s) = (c_H/a) (t-s)^a 2F1(-a, a; a+1; 1 - t/s), a = H - 1/2.
    """
    hp = as_hurst(H)
    a = hp.a
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = np.zeros(t.shape)
    mask = (s > 0) & (t > s)
    if np.any(mask):
        tm, sm = t[mask], s[mask]
        out[mask] = hurst_constant(hp) / a * (tm - sm) ** a * special.hyp2f1(-a, a, a + 1.0, 1.0 - tm / sm)
    return out


def kernel_kh_dt(t, s, H: Union[HurstParam, float]) -> np.ndarray:
    """dK_H/dt (t,s) = c_H (t/s)^{H-1/2} (t-s)^{H-3/2} for t > s."""
    hp = as_hurst(H)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = np.zeros(t.shape)
    mask = (s > 0) & (t > s)
    out[mask] = hurst_constant(hp) * (t[mask] / s[mask]) ** hp.a * (t[mask] - s[mask]) ** (hp.a - 1.0)
    return out


def _check_cells(f: np.ndarray, grid: TimeGrid, name: str = "f") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.steps:
        raise ArgumentError(f"{name} has {f.shape[0]} cell values, grid has {grid.steps} cells")
    if not np.all(np.isfinite(f)):
        raise ArgumentError(f"{name} contains non-finite values")
    return f


def k_star_apply(phi, H: Union[HurstParam, float], grid: TimeGrid, points: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    (K*_H phi)(s) = int_s^T phi(t) dK_H/dt(t,s) dt for a step function phi.

    On each cell the t-integral is exact: K_H(t_{j+1}, s) - K_H(max(t_j, s), s).
    Evaluated at the cell midpoints unless points are given.
    """
    phi = _check_cells(phi, grid, "phi")
    s = grid.midpoints if points is None else np.asarray(points, dtype=float)
    nodes = kernel_kh_matrix(grid.points[:, None], s[None, :], H)
    return phi @ np.diff(nodes, axis=0)


@lru_cache(maxsize=32)
def _cell_weights(points: tuple, H: float) -> np.ndarray:
    t = np.asarray(points)
    p = 2.0 * H
    a, b = t[:-1], t[1:]
    w = -0.5 * (
        np.abs(b[:, None] - b[None, :]) ** p
        - np.abs(a[:, None] - b[None, :]) ** p
        - np.abs(b[:, None] - a[None, :]) ** p
        + np.abs(a[:, None] - a[None, :]) ** p
    )
    w.setflags(write=False)
    return w


def cell_weight_matrix(grid: TimeGrid, H: Union[HurstParam, float]) -> np.ndarray:
    """alpha_H * int_{cell j} int_{cell k} |u-v|^{2H-2} du dv, exactly."""
    return _cell_weights(tuple(grid.points.tolist()), as_hurst(H).H)


def inner_h(f, g, H: Union[HurstParam, float], grid: TimeGrid) -> float:
    """<f, g>_H = alpha_H int int |u-v|^{2H-2} f(u) g(v) du dv for step functions."""
    f = _check_cells(f, grid, "f")
    g = _check_cells(g, grid, "g")
    if f.shape != g.shape:
        raise ArgumentError(f"f and g have different shapes {f.shape} and {g.shape}")
    return float(f @ cell_weight_matrix(grid, H) @ g)


def fractional_integral_right(f, a: float, grid: TimeGrid, points: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Right-sided Riemann-Liouville integral of order a in (0, 1/2):

        (I^a_{T-} f)(x) = 1/Gamma(a) int_x^T f(s) (s-x)^{a-1} ds,

    integrated exactly on each cell. Evaluated at the grid nodes unless points
    are given (points below 0 see f extended by zero).
    """
    if not 0.0 < a < 0.5:
        raise ArgumentError(f"fractional order must lie in (0, 1/2), got {a}")
    f = _check_cells(f, grid)
    x = grid.points if points is None else np.asarray(points, dtype=float)
    t = grid.points
    upper = np.clip(t[1:, None] - x[None, :], 0.0, None) ** a
    lower = np.clip(t[:-1, None] - x[None, :], 0.0, None) ** a
    return (f @ (upper - lower)) / special.gamma(a + 1.0)


def riemann_liouville_energy(f, a: float, grid: TimeGrid) -> float:
    """int_{-inf}^T |I^a_{T-} f(x)|^2 dx with f extended by zero outside [0, T]."""
    f = _check_cells(f, grid)

    def density(x: float) -> float:
        return float(fractional_integral_right(f, a, grid, [x])[0]) ** 2

    total, _ = integrate.quad(density, -np.inf, 0.0, limit=200)
    t = grid.points
    for lo, hi in zip(t[:-1], t[1:]):
        piece, _ = integrate.quad(density, lo, hi, limit=100)
        total += piece
    return float(total)


def representation_constant(H: Union[HurstParam, float], grid: TimeGrid) -> float:
    """C with ||f||_H^2 = C int |I^{H-1/2}_{T-} f|^2, fitted on f = 1_{[0,T]}."""
    hp = as_hurst(H)
    ones = np.ones(grid.steps)
    return inner_h(ones, ones, hp, grid) / riemann_liouville_energy(ones, hp.a, grid)


# Sampling

def derive_seed(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """
    Child seed for (seed, key...): a numpy SeedSequence whose spawn_key is the
    key tuple, so the stream depends only on the integers involved.
    """
    key = tuple(int(k) for k in key)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def _fgn_autocovariance(k: np.ndarray, H: float, dt: float) -> np.ndarray:
    h2 = 2.0 * H
    k = np.abs(k).astype(float)
    return 0.5 * dt ** h2 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


class FbmSampler:
    """
    Exact Gaussian sampler for scalar FBM on a fixed grid.

    Cholesky factorization of [R_H(t_j, t_k)] is the default. The circulant
    embedding (Davies-Harte) fast path is used for uniform grids with at least
    CIRCULANT_MIN_POINTS points when method='auto' or 'circulant', and falls
    back to Cholesky if the embedding has a negative spectrum.
    """

    def __init__(self, hurst: Union[HurstParam, float], grid: TimeGrid, method: str = "auto"):
        if method not in ("auto", "cholesky", "circulant"):
            raise ArgumentError(f"unknown sampling method {method!r}")
        self.hurst = as_hurst(hurst)
        self.grid = grid
        self.logger = logging.getLogger(__name__)
        self._factor = None
        self._spectrum = None

        wants_circulant = method == "circulant" or (
            method == "auto" and grid.points.size >= CIRCULANT_MIN_POINTS
        )
        if wants_circulant and grid.is_uniform:
            self._spectrum = self._circulant_spectrum()
        elif method == "circulant":
            self.logger.warning("Circulant embedding needs a uniform grid; using Cholesky")
        if self._spectrum is None:
            self._factor = self._cholesky_factor()
        self.method = "circulant" if self._spectrum is not None else "cholesky"

    def _cholesky_factor(self) -> np.ndarray:
        cov = covariance_matrix(self.grid, self.hurst)
        scale = float(np.mean(np.diag(cov)))
        jitter = 0.0
        for attempt in range(CHOLESKY_JITTER_ATTEMPTS + 1):
            try:
                return linalg.cholesky(cov + jitter * np.eye(cov.shape[0]), lower=True)
            except linalg.LinAlgError:
                jitter = CHOLESKY_JITTER * scale * 10.0 ** attempt
                self.logger.debug(f"Cholesky failed, retrying with jitter {jitter:.2e}")
        min_eig = float(np.linalg.eigvalsh(cov).min())
        raise SamplerError(
            f"FBM covariance is not numerically positive definite (min eigenvalue {min_eig:.3e}, "
            f"H={self.hurst.H}, {self.grid.steps} steps)",
            min_eigenvalue=min_eig,
        )

    def _circulant_spectrum(self) -> Optional[np.ndarray]:
        n = self.grid.steps
        gamma = _fgn_autocovariance(np.arange(n + 1), self.hurst.H, self.grid.dt)
        row = np.concatenate([gamma, gamma[-2:0:-1]])
        spectrum = fft(row).real
        if spectrum.min() < -1e-10 * spectrum.max():
            self.logger.warning(
                f"Circulant embedding has negative eigenvalue {spectrum.min():.3e}; falling back to Cholesky"
            )
            return None
        return np.maximum(spectrum, 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One path on the grid, starting at 0."""
        n = self.grid.steps
        if self._spectrum is not None:
            m = self._spectrum.size
            noise = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            increments = fft(np.sqrt(self._spectrum / m) * noise).real[:n]
            return np.concatenate([[0.0], np.cumsum(increments)])
        return np.concatenate([[0.0], self._factor @ rng.standard_normal(n)])


def sample_fbm(H: Union[HurstParam, float], grid: TimeGrid, seed: SeedLike, method: str = "auto") -> np.ndarray:
    """One exact FBM sample on the grid; identical seeds give identical paths."""
    return FbmSampler(H, grid, method).sample(np.random.default_rng(seed))


def sample_qfbm(
    spec: TraceClassSpec,
    H: Union[HurstParam, float],
    grid: TimeGrid,
    seed: SeedLike,
    method: str = "auto",
    sampler: Optional[FbmSampler] = None,
) -> QFbmPath:
    """
    M independent FBM paths; mode i draws from derive_seed(seed, i).

    A prepared sampler can be passed to reuse its factorization.
    """
    hp = as_hurst(H)
    sampler = sampler or FbmSampler(hp, grid, method)
    values = np.empty((spec.M, grid.points.size))
    for i in range(spec.M):
        values[i] = sampler.sample(np.random.default_rng(derive_seed(seed, i)))
    return QFbmPath(spec, grid, values, hp)


def cameron_martin_lift(h, mode: int, spec: TraceClassSpec, H: Union[HurstParam, float], grid: TimeGrid) -> QFbmPath:
    """
    Path direction R_H h = K_H o K*_H h placed in noise mode `mode` (0-based).

    Uses (R_H h)(t) = <1_{[0,t]}, h>_H, exact for step functions h.
    """
    h = _check_cells(h, grid, "h")
    if not 0 <= mode < spec.M:
        raise ArgumentError(f"mode {mode} outside 0..{spec.M - 1}")
    hp = as_hurst(H)
    component = np.concatenate([[0.0], np.cumsum(cell_weight_matrix(grid, hp) @ h)])
    values = np.zeros((spec.M, grid.points.size))
    values[mode] = component
    return QFbmPath(spec, grid, values, hp)
