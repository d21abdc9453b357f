"""
Vector fields on the Galerkin truncation, Lie brackets and the bracket hierarchy.

Every field V is stored through a preimage: V(x) = S(T0) W(x) with a smoothing
time T0 >= 0 (T0 = 0 means no range structure). Derivatives of any order are
exact and come back as RangeVector objects, so S(-t) applied to a field value
with t <= T0 is S(T0 - t) applied to the preimage and never amplifies.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

try:
    from config.settings import HIERARCHY_FIELD_CAP, RANK_THRESHOLD
except ImportError:
    HIERARCHY_FIELD_CAP = 512
    RANK_THRESHOLD = 1e-8

from .errors import ArgumentError, ResourceLimitError
from .semigroup_spectral import SpectralSemigroup

if TYPE_CHECKING:
    from .spde_engine import AssumptionProfile

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RangeVector:
    """The vector S(smoothing) raw."""

    raw: np.ndarray
    smoothing: float
    semigroup: SpectralSemigroup

    @property
    def value(self) -> np.ndarray:
        return self.semigroup.apply_s(self.smoothing, self.raw)

    def at_smoothing(self, tau: float) -> np.ndarray:
        """Preimage relative to S(tau), i.e. S(smoothing - tau) raw; needs tau <= smoothing."""
        if tau > self.smoothing + 1e-15:
            raise ArgumentError(f"cannot lift a vector smoothed by {self.smoothing} to {tau}")
        return self.semigroup.apply_s(max(self.smoothing - tau, 0.0), self.raw)

    def pulled_back(self, t: float, amp_cap: Optional[float] = None) -> np.ndarray:
        """S(-t) applied to the vector, through the preimage."""
        kwargs = {} if amp_cap is None else {"amp_cap": amp_cap}
        return self.semigroup.shift(self.smoothing - t, self.raw, **kwargs)

    def _align(self, other: "RangeVector") -> Tuple[np.ndarray, np.ndarray, float]:
        # a zero vector lies in every range
        if not np.any(other.raw):
            return self.raw, np.zeros_like(self.raw), self.smoothing
        if not np.any(self.raw):
            return np.zeros_like(other.raw), other.raw, other.smoothing
        tau = min(self.smoothing, other.smoothing)
        return self.at_smoothing(tau), other.at_smoothing(tau), tau

    def __add__(self, other: "RangeVector") -> "RangeVector":
        a, b, tau = self._align(other)
        return RangeVector(a + b, tau, self.semigroup)

    def __sub__(self, other: "RangeVector") -> "RangeVector":
        a, b, tau = self._align(other)
        return RangeVector(a - b, tau, self.semigroup)

    def __neg__(self) -> "RangeVector":
        return RangeVector(-self.raw, self.smoothing, self.semigroup)

    def scaled(self, c: float) -> "RangeVector":
        return RangeVector(c * self.raw, self.smoothing, self.semigroup)


class VectorField(ABC):
    """
    Smooth field x -> V(x) = S(smoothing) W(x) with exact derivatives.

    Subclasses implement preimage_derivative, the n-th derivative of W in the
    given directions (n = len(dirs), n = 0 is the value itself).
    """

    def __init__(self, semigroup: SpectralSemigroup, smoothing: float = 0.0, name: Optional[str] = None,
                 lipschitz: Optional[float] = None, growth: Optional[float] = None):
        if smoothing < 0:
            raise ArgumentError(f"smoothing time must be non-negative, got {smoothing}")
        self.semigroup = semigroup
        self.smoothing = float(smoothing)
        self.name = name or type(self).__name__
        self.lipschitz = lipschitz
        self.growth = growth

    @property
    def N(self) -> int:
        return self.semigroup.N

    @property
    def is_range(self) -> bool:
        return self.smoothing > 0

    def preimage_derivative(self, x: np.ndarray, dirs: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def range_derivative(self, x: np.ndarray, dirs: Sequence[np.ndarray] = ()) -> RangeVector:
        return RangeVector(self.preimage_derivative(np.asarray(x, dtype=float), list(dirs)), self.smoothing, self.semigroup)

    def range_derivative_along(self, x: np.ndarray, dirs: Sequence[np.ndarray], y: RangeVector) -> RangeVector:
        """D^{n+1}V(x)[dirs..., y]."""
        return self.range_derivative(x, list(dirs) + [y.value])

    def derivative(self, x: np.ndarray, dirs: Sequence[np.ndarray] = ()) -> np.ndarray:
        return self.range_derivative(x, dirs).value

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.derivative(x)

    def jvp(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """grad V(x) h."""
        return self.derivative(x, [h])

    def hessian(self, x: np.ndarray, h: np.ndarray, k: np.ndarray) -> np.ndarray:
        """grad^2 V(x)(h, k)."""
        return self.derivative(x, [h, k])

    def preimage_jacobian(self, x: np.ndarray) -> Tuple[np.ndarray, float]:
        """(grad W(x), smoothing) so that grad V(x) = S(smoothing) grad W(x)."""
        eye = np.eye(self.N)
        columns = [self.range_derivative(x, [eye[:, j]]) for j in range(self.N)]
        tau = min(c.smoothing for c in columns)
        return np.column_stack([c.at_smoothing(tau) for c in columns]), tau

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raw, tau = self.preimage_jacobian(x)
        return self.semigroup.apply_s(tau, raw)

    def __repr__(self):
        return f"{self.name}(N={self.N}, smoothing={self.smoothing:g})"


def _check_vector(v, N: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (N,):
        raise ArgumentError(f"{name} must have shape ({N},), got {v.shape}")
    return v


class ConstantField(VectorField):
    """V(x) = S(T0) a."""

    def __init__(self, semigroup: SpectralSemigroup, a, smoothing: float = 0.0, name: Optional[str] = None):
        super().__init__(semigroup, smoothing, name, lipschitz=0.0, growth=0.0)
        self.a = _check_vector(a, semigroup.N, "a")

    def preimage_derivative(self, x, dirs):
        return self.a.copy() if not dirs else np.zeros(self.N)

    def preimage_jacobian(self, x):
        return np.zeros((self.N, self.N)), self.smoothing


class LinearField(VectorField):
    """V(x) = S(T0)(B x + b)."""

    def __init__(self, semigroup: SpectralSemigroup, B, b=None, smoothing: float = 0.0, name: Optional[str] = None):
        B = np.asarray(B, dtype=float)
        if B.shape != (semigroup.N, semigroup.N):
            raise ArgumentError(f"B must have shape {(semigroup.N, semigroup.N)}, got {B.shape}")
        super().__init__(semigroup, smoothing, name, lipschitz=float(np.linalg.norm(B, 2)), growth=1.0)
        self.B = B
        self.b = np.zeros(semigroup.N) if b is None else _check_vector(b, semigroup.N, "b")

    def preimage_derivative(self, x, dirs):
        if not dirs:
            return self.B @ x + self.b
        if len(dirs) == 1:
            return self.B @ dirs[0]
        return np.zeros(self.N)

    def preimage_jacobian(self, x):
        return self.B.copy(), self.smoothing


class QuadraticField(VectorField):
    """V_m(x) = S(T0)(sum_pq Q_mpq x_p x_q + (B x)_m). Not globally Lipschitz."""

    def __init__(self, semigroup: SpectralSemigroup, Q, B=None, smoothing: float = 0.0, name: Optional[str] = None):
        N = semigroup.N
        Q = np.asarray(Q, dtype=float)
        if Q.shape != (N, N, N):
            raise ArgumentError(f"Q must have shape {(N, N, N)}, got {Q.shape}")
        super().__init__(semigroup, smoothing, name, lipschitz=None, growth=2.0)
        self.Q = 0.5 * (Q + Q.transpose(0, 2, 1))
        self.B = np.zeros((N, N)) if B is None else np.asarray(B, dtype=float)

    def preimage_derivative(self, x, dirs):
        if not dirs:
            return np.einsum("mpq,p,q->m", self.Q, x, x) + self.B @ x
        if len(dirs) == 1:
            return 2.0 * np.einsum("mpq,p,q->m", self.Q, dirs[0], x) + self.B @ dirs[0]
        if len(dirs) == 2:
            return 2.0 * np.einsum("mpq,p,q->m", self.Q, dirs[0], dirs[1])
        return np.zeros(self.N)

    def preimage_jacobian(self, x):
        return 2.0 * np.einsum("mpq,q->mp", self.Q, x) + self.B, self.smoothing


class SineField(VectorField):
    """
    Built-in bounded family W_m(x) = a_m + sum_p b_mp sin(c_mp x_p), wrapped as S(T0) W.

    All derivatives are bounded, so the Lipschitz and growth assumptions hold
    with constants read off b and c.
    """

    def __init__(self, semigroup: SpectralSemigroup, a, b, c, smoothing: float = 0.0, name: Optional[str] = None):
        N = semigroup.N
        b = np.asarray(b, dtype=float)
        c = np.asarray(c, dtype=float)
        if b.shape != (N, N) or c.shape != (N, N):
            raise ArgumentError(f"b and c must have shape {(N, N)}, got {b.shape} and {c.shape}")
        super().__init__(semigroup, smoothing, name, lipschitz=float(np.linalg.norm(b * c)), growth=0.0)
        self.a = _check_vector(a, N, "a")
        self.b = b
        self.c = c

    def preimage_derivative(self, x, dirs):
        n = len(dirs)
        phase = self.c * x[None, :] + n * np.pi / 2.0
        coeff = self.b * self.c ** n * np.sin(phase)
        if n == 0:
            return self.a + coeff.sum(axis=1)
        weight = np.prod(np.vstack(dirs), axis=0)
        return coeff @ weight

    def preimage_jacobian(self, x):
        return self.b * self.c * np.cos(self.c * x[None, :]), self.smoothing


class DriftGenerator(VectorField):
    """The formal field G_0(x) = A x + F(x)."""

    def __init__(self, semigroup: SpectralSemigroup, drift: Optional[VectorField] = None):
        super().__init__(semigroup, 0.0, "G0")
        self.drift = drift if drift is not None else ConstantField(semigroup, np.zeros(semigroup.N), name="F")

    def range_derivative(self, x, dirs=()):
        dirs = list(dirs)
        f_part = self.drift.range_derivative(x, dirs)
        if len(dirs) >= 2:
            return f_part
        arg = np.asarray(x, dtype=float) if not dirs else dirs[0]
        return RangeVector(self.semigroup.generator(arg), 0.0, self.semigroup) + f_part

    def range_derivative_along(self, x, dirs, y):
        dirs = list(dirs)
        f_part = self.drift.range_derivative(x, dirs + [y.value])
        if dirs:
            return f_part
        # A keeps the range of y: A S(tau) r = S(tau) A r
        return RangeVector(self.semigroup.generator(y.raw), y.smoothing, self.semigroup) + f_part


def _range_time(f: VectorField) -> float:
    """Smoothing a field contributes to brackets; G0 passes its argument's range through A."""
    if isinstance(f, DriftGenerator):
        drift = f.drift
        if isinstance(drift, ConstantField) and not np.any(drift.a):
            return np.inf
        return drift.smoothing
    return f.smoothing


class LieBracket(VectorField):
    """
    [V, W](x) = grad W(x) V(x) - grad V(x) W(x).

    Higher derivatives follow the subset Leibniz rule, so brackets of brackets
    stay exact.
    """

    def __init__(self, V: VectorField, W: VectorField):
        if V.semigroup is not W.semigroup and not np.array_equal(V.semigroup.eigenvalues, W.semigroup.eigenvalues):
            raise ArgumentError("bracketed fields live on different truncations")
        smoothing = min(_range_time(V), _range_time(W))
        super().__init__(W.semigroup, 0.0 if np.isinf(smoothing) else smoothing, f"[{V.name},{W.name}]")
        self.V = V
        self.W = W

    def range_derivative(self, x, dirs=()):
        x = np.asarray(x, dtype=float)
        dirs = list(dirs)
        n = len(dirs)
        total = None
        for chosen in itertools.product((False, True), repeat=n):
            inner = [d for d, c in zip(dirs, chosen) if c]
            outer = [d for d, c in zip(dirs, chosen) if not c]
            term = (self.W.range_derivative_along(x, outer, self.V.range_derivative(x, inner))
                    - self.V.range_derivative_along(x, outer, self.W.range_derivative(x, inner)))
            total = term if total is None else total + term
        return total


def lie_bracket(V: VectorField, W: VectorField, x: np.ndarray) -> np.ndarray:
    """[V, W](x) = grad W(x) V(x) - grad V(x) W(x)."""
    return LieBracket(V, W)(x)


@dataclass
class VectorFieldSet:
    """Drift F and diffusion fields G_1..G_M on one truncation."""

    semigroup: SpectralSemigroup
    diffusions: List[VectorField]
    drift: Optional[VectorField] = None

    def __post_init__(self):
        if not self.diffusions:
            raise ArgumentError("at least one diffusion field is required")
        if self.drift is None:
            self.drift = ConstantField(self.semigroup, np.zeros(self.semigroup.N), name="F")
        for f in [self.drift] + list(self.diffusions):
            if f.N != self.semigroup.N:
                raise ArgumentError(f"field {f.name} has dimension {f.N}, expected {self.semigroup.N}")

    @property
    def M(self) -> int:
        return len(self.diffusions)

    @property
    def N(self) -> int:
        return self.semigroup.N

    @property
    def generator_field(self) -> DriftGenerator:
        return DriftGenerator(self.semigroup, self.drift)

    def diffusion_values(self, x: np.ndarray) -> np.ndarray:
        """(M, N) array of G_i(x)."""
        return np.vstack([g(x) for g in self.diffusions])

    def diffusion_range_values(self, x: np.ndarray) -> List[RangeVector]:
        return [g.range_derivative(x) for g in self.diffusions]

    def drift_jacobian(self, x: np.ndarray) -> Tuple[np.ndarray, float]:
        return self.drift.preimage_jacobian(x)

    def diffusion_jacobians(self, x: np.ndarray) -> List[Tuple[np.ndarray, float]]:
        return [g.preimage_jacobian(x) for g in self.diffusions]


@dataclass
class BracketHierarchy:
    """Cumulative bracket sets V_0 <= V_1 <= ... evaluated at x0."""

    x0: np.ndarray
    levels: List[List[VectorField]]
    values: List[RangeVector] = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return len(self.levels) - 1

    def fields(self, level: Optional[int] = None) -> List[VectorField]:
        return self.levels[self.k_max if level is None else level]

    def labels(self, level: Optional[int] = None) -> List[str]:
        return [f.name for f in self.fields(level)]

    def span_matrix(self, level: Optional[int] = None, projection: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Columns spanning V_level(x0).

        Without a projection the columns are preimages brought to the common
        smoothing time; with a projection T they are T applied to the values.
        Columns are scaled to unit length and zero columns are dropped.
        """
        count = len(self.fields(level))
        vectors = self.values[:count]
        if not vectors:
            return np.zeros((self.x0.size if projection is None else np.atleast_2d(projection).shape[0], 0))
        if projection is None:
            tau = min(v.smoothing for v in vectors)
            columns = np.column_stack([v.at_smoothing(tau) for v in vectors])
        else:
            T = np.atleast_2d(np.asarray(projection, dtype=float))
            columns = T @ np.column_stack([v.value for v in vectors])
        norms = np.linalg.norm(columns, axis=0)
        keep = norms > 1e-13
        return columns[:, keep] / norms[keep]

    def singular_values(self, level: Optional[int] = None, projection: Optional[np.ndarray] = None) -> np.ndarray:
        matrix = self.span_matrix(level, projection)
        if matrix.shape[1] == 0:
            return np.zeros(0)
        return linalg.svdvals(matrix)


def build_hierarchy(
    diffusions: Sequence[VectorField],
    drift: DriftGenerator,
    x0: np.ndarray,
    k_max: int,
    cap: int = HIERARCHY_FIELD_CAP,
) -> BracketHierarchy:
    """
    V_0 = {G_i}; V_{k+1} = V_k together with [G_j, V] for V added at level k,
    j = 0..M (j = 0 is the drift with generator).

    Raises:
        ResourceLimitError: if a level would hold more than `cap` fields
    """
    if k_max < 0:
        raise ArgumentError(f"k_max must be non-negative, got {k_max}")
    x0 = np.asarray(x0, dtype=float)
    generators = [drift] + list(diffusions)
    current = list(diffusions)
    newest = list(diffusions)
    levels = [list(current)]
    for k in range(k_max):
        added = [LieBracket(g, v) for v in newest for g in generators if g is not v]
        if len(current) + len(added) > cap:
            raise ResourceLimitError(
                f"bracket hierarchy level {k + 1} would hold {len(current) + len(added)} fields (cap {cap})"
            )
        current = current + added
        newest = added
        levels.append(list(current))
    logger.info(f"Built bracket hierarchy up to level {k_max} with {len(current)} fields")
    values = [f.range_derivative(x0) for f in current]
    return BracketHierarchy(x0=x0, levels=levels, values=values)


def rank_at(hierarchy: BracketHierarchy, projection: Optional[np.ndarray] = None,
            tau: float = RANK_THRESHOLD, level: Optional[int] = None) -> int:
    """Number of singular values of the span matrix above tau * sigma_max."""
    if not 0.0 < tau < 1.0:
        raise ArgumentError(f"rank threshold must lie in (0, 1), got {tau}")
    if not hierarchy.fields(level):
        raise ArgumentError("hierarchy is empty")
    sv = hierarchy.singular_values(level, projection)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > tau * sv[0]))


# Assumption audit

@dataclass
class AuditItem:
    name: str
    status: str
    value: Optional[float] = None
    detail: str = ""


@dataclass
class AuditReport:
    items: List[AuditItem] = field(default_factory=list)

    def add(self, name: str, ok: bool, value: Optional[float] = None, detail: str = ""):
        self.items.append(AuditItem(name, "pass" if ok else "warn", value, detail))
        if not ok:
            logger.warning(f"Assumption check {name} flagged: {detail}")

    @property
    def passed(self) -> bool:
        return all(item.status == "pass" for item in self.items)

    def status(self, name: str) -> str:
        for item in self.items:
            if item.name == name:
                return item.status
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {item.name: {"status": item.status, "value": item.value, "detail": item.detail} for item in self.items}


def derivative_consistency(f: VectorField, x: np.ndarray, h: np.ndarray, k: np.ndarray, eps: float = 1e-5) -> Tuple[float, float]:
    """(relative central-difference error of grad f(x)h, asymmetry of grad^2 f(x)(h,k))."""
    fd = (f(x + eps * h) - f(x - eps * h)) / (2.0 * eps)
    exact = f.jvp(x, h)
    scale = max(np.linalg.norm(exact), np.linalg.norm(fd), 1e-300)
    jvp_error = float(np.linalg.norm(fd - exact) / scale) if np.linalg.norm(exact) > 1e-14 else float(np.linalg.norm(fd))
    asym = float(np.linalg.norm(f.hessian(x, h, k) - f.hessian(x, k, h)))
    return jvp_error, asym


def _growth_exponent(f: VectorField, x: np.ndarray, r1: float = 10.0, r2: float = 100.0) -> float:
    n1 = np.linalg.norm(f(r1 * x))
    n2 = np.linalg.norm(f(r2 * x))
    if n1 <= 1e-300 or n2 <= 1e-300:
        return 0.0
    return float(np.log(n2 / n1) / np.log(r2 / r1))


def assumption_audit(
    fields: VectorFieldSet,
    profile: "AssumptionProfile",
    sample_points: Sequence[np.ndarray],
    seed: int = 0,
) -> AuditReport:
    """
    Advisory check of the regularity and range assumptions on sampled points.

    Measured constants are reported with the verdict; nothing here raises.
    """
    rng = np.random.default_rng(seed)
    points = [np.asarray(p, dtype=float) for p in sample_points]
    if not points:
        points = [np.zeros(fields.N)]
    report = AuditReport()
    N = fields.N

    # derivative consistency on every registered field
    worst_jvp, worst_sym = 0.0, 0.0
    for f in [fields.drift] + list(fields.diffusions):
        for x in points:
            h, k = rng.standard_normal(N), rng.standard_normal(N)
            h, k = h / np.linalg.norm(h), k / np.linalg.norm(k)
            e, s = derivative_consistency(f, x, h, k)
            worst_jvp, worst_sym = max(worst_jvp, e), max(worst_sym, s)
    report.add("derivative_fd", worst_jvp < 1e-5, worst_jvp, "central-difference error of the Jacobian-vector product")
    report.add("hessian_symmetry", worst_sym < 1e-10, worst_sym, "asymmetry of the second derivative")

    # drift Lipschitz and linear growth
    drift_lip = max(np.linalg.norm(fields.drift.jacobian(x), 2) for x in points)
    report.add("drift_lipschitz", bool(np.isfinite(drift_lip)), float(drift_lip), "max |grad F| over sample points")
    growth = max(_growth_exponent(fields.drift, x) for x in points if np.linalg.norm(x) > 0) if any(
        np.linalg.norm(x) > 0 for x in points) else 0.0
    report.add("drift_linear_growth", growth <= 1.1, growth, f"observed growth exponent {growth:.2f} of F at scaled points")

    # uniformly bounded first and second derivatives of G_i
    first = max(np.linalg.norm(g.jacobian(x), 2) for g in fields.diffusions for x in points)
    first_far = max(np.linalg.norm(g.jacobian(100.0 * x), 2) for g in fields.diffusions for x in points)
    bounded = first_far <= 2.0 * first + 1e-12
    report.add("diffusion_first_derivative", bool(np.isfinite(first)) and bounded, float(max(first, first_far)),
               "sup_i sup_x |grad G_i(x)|")
    second = 0.0
    for g in fields.diffusions:
        for x in points:
            h, k = rng.standard_normal(N), rng.standard_normal(N)
            second = max(second, np.linalg.norm(g.hessian(x, h / np.linalg.norm(h), k / np.linalg.norm(k))))
    report.add("diffusion_second_derivative", bool(np.isfinite(second)), float(second), "sup |grad^2 G_i(x)(h,k)|, |h|=|k|=1")

    # Lipschitz constants of grad G_i and grad^2 G_i between sample points
    lip1, lip2 = 0.0, 0.0
    h, k = rng.standard_normal(N), rng.standard_normal(N)
    for g in fields.diffusions:
        for x, y in itertools.combinations(points, 2):
            dist = np.linalg.norm(x - y)
            if dist == 0:
                continue
            lip1 = max(lip1, np.linalg.norm(g.jacobian(x) - g.jacobian(y), 2) / dist)
            lip2 = max(lip2, np.linalg.norm(g.hessian(x, h, k) - g.hessian(y, h, k)) / dist)
    report.add("derivative_lipschitz", bool(np.isfinite(lip1) and np.isfinite(lip2)), float(max(lip1, lip2)),
               "Lipschitz constants of grad G_i and grad^2 G_i")

    # exponent block of the profile
    H = profile.H
    exponents_ok = profile.alpha > 1.0 - H and profile.alpha < min((1.0 - profile.gamma1) / 2.0, (1.0 - profile.gamma2) / 2.0)
    report.add("exponent_constraints", bool(exponents_ok), float(profile.alpha),
               f"alpha={profile.alpha:.4f} needs 1-H < alpha < (1-gamma)/2")

    # range structure
    report.add("diffusion_range", all(g.is_range for g in fields.diffusions), None,
               "diffusion fields take values in S(T0)E")
    report.add("drift_range", fields.drift.is_range or not np.any(fields.drift.jacobian(points[0])), None,
               "drift derivative takes values in S(T0)E")
    closure = [LieBracket(fields.generator_field, g).range_derivative(points[0]).smoothing > 0 for g in fields.diffusions]
    report.add("bracket_closure", all(closure), None, "brackets with G0 keep a semigroup preimage")
    return report


# Field construction from coefficient tables

FIELD_KINDS = ("zero", "constant", "linear", "quadratic", "sine")


def make_field(kind: str, semigroup: SpectralSemigroup, smoothing: float = 0.0, name: Optional[str] = None,
               **coefficients) -> VectorField:
    """Build a field from a kind name and its coefficient arrays."""
    N = semigroup.N
    if kind == "zero":
        return ConstantField(semigroup, np.zeros(N), smoothing, name)
    if kind == "constant":
        return ConstantField(semigroup, coefficients.get("a", np.zeros(N)), smoothing, name)
    if kind == "linear":
        return LinearField(semigroup, coefficients["B"], coefficients.get("a"), smoothing, name)
    if kind == "quadratic":
        return QuadraticField(semigroup, coefficients["Q"], coefficients.get("B"), smoothing, name)
    if kind == "sine":
        return SineField(semigroup, coefficients.get("a", np.zeros(N)), coefficients["b"], coefficients["c"], smoothing, name)
    raise ArgumentError(f"unknown field kind {kind!r}; expected one of {FIELD_KINDS}")


def coupled_sine_diffusions(semigroup: SpectralSemigroup, M: int, smoothing: float, scale: float = 0.5) -> List[VectorField]:
    """
    Default diffusion family: G_i = S(T0) W_i with W_i = e_i + sum_p b_mp sin(c_mp x_p).

    The couplings b_mp = scale / (1 + |m - p| + i) with frequencies
    c_mp = 1 + (m + p + i) mod 3 give brackets that reach every coordinate.
    """
    N = semigroup.N
    m, p = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    fields = []
    for i in range(M):
        a = np.zeros(N)
        a[i % N] = 1.0
        b = scale / (1.0 + np.abs(m - p) + i)
        c = 1.0 + (m + p + i) % 3
        fields.append(SineField(semigroup, a, b, c, smoothing, name=f"G{i + 1}"))
    return fields
