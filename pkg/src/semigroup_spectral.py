"""
Diagonal analytic semigroups on a Galerkin truncation.

The generator A is represented by the eigenvalues mu_n of -A, so that
S(t) = exp(tA) acts on coefficients as c_n -> exp(-mu_n t) c_n. The left
inverse S(-t) is only meaningful on S(t)E and is therefore guarded by an
amplification cap.

Note on the Dirichlet example: the eigenvalues of -d^2/dx^2 on (0,1) with
eigenfunctions sqrt(2) sin(pi n x) are pi^2 n^2. Some references print
pi^2 n; that is treated as a typo and pi^2 n^2 is used here.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

try:
    from config.settings import AMPLIFICATION_CAP
except ImportError:
    AMPLIFICATION_CAP = 1e12

from .errors import ArgumentError, RangeAmplificationError

logger = logging.getLogger(__name__)

# Coefficient vector in span{e_1..e_N}; stacks keep the Galerkin index on axis 0.
GalerkinVector = np.ndarray
# Operator on span{e_1..e_N} as an (N, N) array.
GalerkinMatrix = np.ndarray


def _broadcast(diagonal: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Multiply along the first axis of v."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != diagonal.shape[0]:
        raise ArgumentError(f"expected leading dimension {diagonal.shape[0]}, got shape {v.shape}")
    return diagonal.reshape((-1,) + (1,) * (v.ndim - 1)) * v


@dataclass(frozen=True, eq=False)
class SpectralSemigroup:
    """Semigroup S(t) with diagonal generator A = -diag(mu)."""

    eigenvalues: np.ndarray
    test_only: bool = field(default=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.eigenvalues, dtype=float).ravel()
        if mu.size < 1:
            raise ArgumentError("a semigroup needs at least one mode")
        if np.any(mu < 0):
            raise ArgumentError("eigenvalues of -A must be non-negative")
        if np.all(mu == 0):
            object.__setattr__(self, "test_only", True)
        elif np.any(mu == 0):
            raise ArgumentError("eigenvalues must be all positive or all zero")
        if np.any(np.diff(mu) < 0):
            raise ArgumentError("eigenvalues must be sorted increasingly")
        mu.setflags(write=False)
        object.__setattr__(self, "eigenvalues", mu)

    # Constructors

    @classmethod
    def dirichlet_laplacian(cls, N: int) -> "SpectralSemigroup":
        """Heat semigroup on (0,1) with Dirichlet conditions: mu_n = pi^2 n^2."""
        if int(N) != N or N < 1:
            raise ArgumentError(f"Galerkin dimension must be a positive integer, got {N}")
        n = np.arange(1, int(N) + 1, dtype=float)
        return cls(np.pi ** 2 * n ** 2)

    @classmethod
    def identity(cls, N: int) -> "SpectralSemigroup":
        """All mu_n = 0, so S(t) = Id. Only meant for closed-form tests."""
        if int(N) != N or N < 1:
            raise ArgumentError(f"Galerkin dimension must be a positive integer, got {N}")
        return cls(np.zeros(int(N)), test_only=True)

    @classmethod
    def diagonal(cls, eigenvalues) -> "SpectralSemigroup":
        return cls(np.sort(np.asarray(eigenvalues, dtype=float)))

    @property
    def N(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def decay_rate(self) -> float:
        """Exponential decay rate: ||S(t)|| <= exp(-mu_1 t)."""
        return float(self.eigenvalues[0])

    # Semigroup action

    def factors(self, t: float) -> np.ndarray:
        if t < 0:
            raise ArgumentError(f"S(t) needs t >= 0, got {t}; use apply_s_inverse")
        return np.exp(-self.eigenvalues * t)

    def matrix(self, t: float) -> GalerkinMatrix:
        return np.diag(self.factors(t))

    def apply_s(self, t: float, v: GalerkinVector) -> GalerkinVector:
        """S(t)v."""
        return _broadcast(self.factors(t), v)

    def amplification(self, t: float) -> np.ndarray:
        return np.exp(self.eigenvalues * t)

    def apply_s_inverse(self, t: float, v: GalerkinVector, amp_cap: float = AMPLIFICATION_CAP) -> GalerkinVector:
        """
        Left inverse S(-t)v, for vectors known to lie in S(t)E.

        Raises:
            RangeAmplificationError: if exp(mu_n t) exceeds amp_cap for some mode
        """
        if t < 0:
            raise ArgumentError(f"S(-t) needs t >= 0, got {t}")
        gain = self.amplification(t)
        over = np.nonzero(gain > amp_cap)[0]
        if over.size:
            mode = int(over[0]) + 1
            raise RangeAmplificationError(
                f"S(-{t:g}) amplifies mode {mode} by {gain[over[0]]:.3e} > cap {amp_cap:.1e}; "
                f"vector is not numerically in S(t)E",
                mode=mode,
                amplification=float(gain[over[0]]),
            )
        return _broadcast(gain, v)

    def shift(self, tau: float, v: GalerkinVector, amp_cap: float = AMPLIFICATION_CAP) -> GalerkinVector:
        """S(tau)v for tau >= 0, capped S(tau) = S(-|tau|) otherwise."""
        if tau >= 0:
            return self.apply_s(tau, v)
        return self.apply_s_inverse(-tau, v, amp_cap=amp_cap)

    # Fractional powers and the scale E_alpha

    def power_factors(self, alpha: float) -> np.ndarray:
        if alpha == 0:
            return np.ones_like(self.eigenvalues)
        if alpha < 0 and np.any(self.eigenvalues == 0):
            raise ArgumentError("(-A)^alpha with alpha < 0 needs strictly positive eigenvalues")
        return self.eigenvalues ** alpha

    def fractional_power(self, alpha: float, v: GalerkinVector) -> GalerkinVector:
        """(-A)^alpha v."""
        return _broadcast(self.power_factors(alpha), v)

    def alpha_norm(self, v: GalerkinVector, alpha: float = 0.0) -> float:
        """|v|_alpha = ||(-A)^alpha v||_E."""
        w = self.fractional_power(alpha, v)
        return float(np.sqrt(np.sum(w * w)))

    def generator(self, v: GalerkinVector) -> GalerkinVector:
        """A v = -mu * v."""
        return _broadcast(-self.eigenvalues, v)

    def smoothing_bound_check(self, alpha: float, t: float) -> float:
        """Operator norm of (-A)^alpha S(t) on the truncation."""
        if t <= 0:
            raise ArgumentError(f"smoothing bound needs t > 0, got {t}")
        return float(np.max(self.power_factors(alpha) * np.exp(-self.eigenvalues * t)))


def smoothing_constant(alpha: float) -> float:
    """sup_{x>0} x^alpha e^{-x} = (alpha/e)^alpha (1 for alpha = 0)."""
    if alpha < 0:
        raise ArgumentError("smoothing constant is defined for alpha >= 0")
    if alpha == 0:
        return 1.0
    return float((alpha / np.e) ** alpha)


