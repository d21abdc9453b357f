"""
Monte Carlo diagnostics for the existence of a density of T(X_t).

Each sample draws a Q-FBM path, solves the equation and its flows, and
records the spectra of C_t and gamma_t. Samples run as independent joblib tasks;
sample i always draws its noise from derive_seed(seed, i), so results do not
depend on the worker count.
"""

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats
from tqdm import tqdm

try:
    from config.settings import (
        CONFIG_SCHEMA_VERSION, DEFAULT_EIGENVALUE_DECAY, DEFAULT_GALERKIN_MODES, DEFAULT_HORIZON,
        DEFAULT_HURST, DEFAULT_KAPPA, DEFAULT_NOISE_MODES, DEFAULT_SAMPLES, DEFAULT_STEPS,
        KDE_BANDWIDTH_FLOOR, KDE_GRID_POINTS, MC_FAILURE_LIMIT, RANK_THRESHOLD
    )
except ImportError:
    CONFIG_SCHEMA_VERSION = 1
    DEFAULT_HURST = 0.9
    DEFAULT_KAPPA = 0.3
    DEFAULT_HORIZON = 0.5
    DEFAULT_STEPS = 256
    DEFAULT_GALERKIN_MODES = 8
    DEFAULT_NOISE_MODES = 4
    DEFAULT_EIGENVALUE_DECAY = 3.0
    DEFAULT_SAMPLES = 64
    MC_FAILURE_LIMIT = 0.10
    KDE_GRID_POINTS = 256
    KDE_BANDWIDTH_FLOOR = 1e-6
    RANK_THRESHOLD = 1e-8

from .errors import ArgumentError, NumericalError
from .fbm_gaussian import FbmSampler, HurstParam, TimeGrid, TraceClassSpec, derive_seed, sample_qfbm
from .malliavin_core import malliavin_matrices
from .semigroup_spectral import SpectralSemigroup
from .spde_engine import AssumptionProfile, FlowMatrices, SolutionPath, choose_exponents, solve_flows, solve_mild
from .vector_fields import (
    LieBracket, VectorField, VectorFieldSet, build_hierarchy, coupled_sine_diffusions, make_field, rank_at
)

logger = logging.getLogger(__name__)


# Experiment configuration

class FieldConfig(BaseModel):
    """Coefficients of one vector field; matrices are lists of rows."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["zero", "constant", "linear", "quadratic", "sine"] = "zero"
    a: Optional[List[float]] = None
    B: Optional[List[List[float]]] = None
    b: Optional[List[List[float]]] = None
    c: Optional[List[List[float]]] = None
    Q: Optional[List[List[List[float]]]] = None
    smoothing: Optional[float] = None

    def build(self, semigroup: SpectralSemigroup, default_smoothing: float, name: str) -> VectorField:
        coefficients = {k: np.asarray(v, dtype=float) for k, v in
                        (("a", self.a), ("B", self.B), ("b", self.b), ("c", self.c), ("Q", self.Q)) if v is not None}
        smoothing = default_smoothing if self.smoothing is None else self.smoothing
        try:
            return make_field(self.kind, semigroup, smoothing, name, **coefficients)
        except KeyError as e:
            raise ArgumentError(f"field {name} of kind {self.kind} is missing coefficient {e.args[0]}") from e


class ExperimentConfig(BaseModel):
    """Everything a run depends on; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = CONFIG_SCHEMA_VERSION
    hurst: float = DEFAULT_HURST
    kappa: float = DEFAULT_KAPPA
    horizon: float = Field(DEFAULT_HORIZON, gt=0)
    steps: int = Field(DEFAULT_STEPS, ge=1)
    galerkin_modes: int = Field(DEFAULT_GALERKIN_MODES, ge=1)
    noise_modes: int = Field(DEFAULT_NOISE_MODES, ge=1)
    eigenvalue_decay: float = Field(DEFAULT_EIGENVALUE_DECAY, gt=0)
    semigroup: Literal["dirichlet", "identity"] = "dirichlet"
    smoothing: Optional[float] = Field(None, ge=0)
    x0: Optional[List[float]] = None
    projection: List[int] = Field(default_factory=lambda: [1])
    samples: int = Field(DEFAULT_SAMPLES, ge=0)
    seed: int = Field(0, ge=0)
    t_values: Optional[List[float]] = None
    sampler: Literal["auto", "cholesky", "circulant"] = "auto"
    hierarchy_depth: int = Field(1, ge=0)
    rank_threshold: float = Field(RANK_THRESHOLD, gt=0, lt=1)
    transport_time: Optional[float] = None
    output_dir: Optional[str] = None
    drift: FieldConfig = Field(default_factory=FieldConfig)
    diffusions: List[FieldConfig] = Field(default_factory=list)

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, v):
        if v != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}, expected {CONFIG_SCHEMA_VERSION}")
        return v

    @field_validator("hurst")
    @classmethod
    def _hurst_range(cls, v):
        if not 0.5 < v < 1.0:
            raise ValueError(f"H must lie in (1/2, 1), got {v}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        N = self.galerkin_modes
        if self.x0 is not None and len(self.x0) != N:
            raise ValueError(f"x0 has {len(self.x0)} entries, galerkin_modes is {N}")
        if not self.projection or any(not 1 <= c <= N for c in self.projection):
            raise ValueError(f"projection coordinates must lie in 1..{N}, got {self.projection}")
        if self.diffusions and len(self.diffusions) != self.noise_modes:
            raise ValueError(f"{len(self.diffusions)} diffusion sections given, noise_modes is {self.noise_modes}")
        grid = self.grid()
        for t in self.times():
            try:
                grid.index_of(t)
            except ArgumentError as e:
                raise ValueError(f"t value {t} is not on the time grid") from e
        s = self.transport_s()
        if not 0.0 <= s <= self.horizon:
            raise ValueError(f"transport_time must lie in [0, horizon], got {s}")
        return self

    # derived objects

    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.horizon, self.steps)

    def times(self) -> List[float]:
        return list(self.t_values) if self.t_values else [self.horizon]

    def transport_s(self) -> float:
        if self.transport_time is not None:
            return self.transport_time
        grid = self.grid()
        return float(grid.points[grid.steps // 2])

    def build_semigroup(self) -> SpectralSemigroup:
        if self.semigroup == "identity":
            return SpectralSemigroup.identity(self.galerkin_modes)
        return SpectralSemigroup.dirichlet_laplacian(self.galerkin_modes)

    def trace_class(self) -> TraceClassSpec:
        return TraceClassSpec.power_law(self.noise_modes, self.eigenvalue_decay)

    def initial_state(self) -> np.ndarray:
        if self.x0 is not None:
            return np.asarray(self.x0, dtype=float)
        return 1.0 / np.arange(1, self.galerkin_modes + 1, dtype=float)

    def projection_matrix(self) -> np.ndarray:
        T = np.zeros((len(self.projection), self.galerkin_modes))
        for row, coord in enumerate(self.projection):
            T[row, coord - 1] = 1.0
        return T

    def build_fields(self, semigroup: Optional[SpectralSemigroup] = None) -> VectorFieldSet:
        S = semigroup or self.build_semigroup()
        T0 = self.horizon if self.smoothing is None else self.smoothing
        drift = self.drift.build(S, T0, "F")
        if self.diffusions:
            diffusions = [cfg.build(S, T0, f"G{i + 1}") for i, cfg in enumerate(self.diffusions)]
        else:
            diffusions = coupled_sine_diffusions(S, self.noise_modes, T0)
        return VectorFieldSet(S, diffusions, drift)

    def profile(self) -> AssumptionProfile:
        return choose_exponents(self.hurst, self.kappa)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


# Report types

@dataclass
class SampleResult:
    """
    Per-sample spectra of C_t and gamma_t, keyed by t.

    lambda_min, lambda_max and det are those of gamma at worst_t, the requested
    time with the smallest lambda_min / lambda_max; nondegenerate holds only
    if it holds at every requested time.
    """
    index: int
    spawn_key: List[int]
    failed: bool = False
    error: Optional[str] = None
    eig_gamma: Dict[str, List[float]] = field(default_factory=dict)
    eig_C: Dict[str, List[float]] = field(default_factory=dict)
    nondegenerate_by_time: Dict[str, bool] = field(default_factory=dict)
    worst_t: Optional[float] = None
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    det: Optional[float] = None
    nondegenerate: Optional[bool] = None
    projected_state: Optional[List[float]] = None


@dataclass
class KdeCurve:
    coordinate: int
    grid: List[float]
    density: List[float]
    bandwidth: float
    degenerate: bool = False


@dataclass
class DiagnosticsReport:
    config: Dict[str, Any]
    seed: int
    samples_requested: int
    results: List[SampleResult] = field(default_factory=list)
    failures: int = 0
    lambda_min_quantiles: Dict[str, float] = field(default_factory=dict)
    nondegenerate_fraction: Optional[float] = None
    hierarchy_ranks: Dict[str, int] = field(default_factory=dict)
    transport_residuals: Dict[str, float] = field(default_factory=dict)
    kde: List[KdeCurve] = field(default_factory=list)
    run: Dict[str, Any] = field(default_factory=dict)

    @property
    def sample_count(self) -> int:
        return len(self.results)

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        """sha256 of the report without the run block (timestamp, runtime)."""
        data = self.to_dict()
        data.pop("run", None)
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()


# Bracket transport and KDE

def bracket_transport_check(solution: SolutionPath, flows: FlowMatrices, fields: VectorFieldSet, V: VectorField,
                            s: float) -> float:
    """
    E-norm residual of

        J+_s V(X_s) = V(x0) + int_0^s J+_r [G0, V](X_r) dr
                      + sum_l sqrt(lambda_l) int_0^s J+_r [G_l, V](X_r) dbeta^l_r,

    with both integrals as trapezoidal grid sums.
    """
    i_s = solution.grid.index_of(s)
    lhs = flows.right_inverse_apply(i_s, V.range_derivative(solution.states[i_s]))
    rhs = V(solution.states[0]).copy()
    if i_s == 0:
        return float(np.linalg.norm(lhs - rhs))
    drift_bracket = LieBracket(fields.generator_field, V)
    noise_brackets = [LieBracket(g, V) for g in fields.diffusions]

    def transported(bracket, k):
        return flows.right_inverse_apply(k, bracket.range_derivative(solution.states[k]))

    a = np.array([transported(drift_bracket, k) for k in range(i_s + 1)])
    b = np.array([[transported(br, k) for k in range(i_s + 1)] for br in noise_brackets])
    dts = solution.grid.widths[:i_s]
    rhs += np.einsum("k,kn->n", dts, 0.5 * (a[:-1] + a[1:]))
    noise = solution.noise
    dbw = noise.increments()[:, :i_s] * noise.spec.sqrt_weights[:, None]
    rhs += np.einsum("lk,lkn->n", dbw, 0.5 * (b[:, :-1] + b[:, 1:]))
    return float(np.linalg.norm(lhs - rhs))


def kde_estimate(samples, bandwidth: str = "silverman", grid_points: int = KDE_GRID_POINTS) -> List[KdeCurve]:
    """
    Per-coordinate Gaussian kernel density estimate.

    A coordinate with zero spread gets a spike of width KDE_BANDWIDTH_FLOOR and
    a warning instead of failing.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] < 2:
        raise ArgumentError(f"kernel density estimation needs at least 2 samples, got {data.shape[0]}")
    curves = []
    for j in range(data.shape[1]):
        x = data[:, j]
        spread = float(np.std(x))
        if spread <= 1e-12 * max(1.0, abs(float(np.mean(x)))):
            centre = float(np.mean(x))
            bw = KDE_BANDWIDTH_FLOOR
            logger.warning(f"Coordinate {j + 1} has no spread; using a spike of width {bw:g}")
            grid = np.linspace(centre - 5 * bw, centre + 5 * bw, grid_points)
            density = stats.norm.pdf(grid, loc=centre, scale=bw)
            curves.append(KdeCurve(j + 1, grid.tolist(), density.tolist(), bw, degenerate=True))
            continue
        kde = stats.gaussian_kde(x, bw_method=bandwidth)
        bw = float(np.sqrt(kde.covariance[0, 0]))
        grid = np.linspace(x.min() - 4 * bw, x.max() + 4 * bw, grid_points)
        curves.append(KdeCurve(j + 1, grid.tolist(), kde(grid).tolist(), bw))
    return curves


# Monte Carlo

@dataclass
class _RunContext:
    config: ExperimentConfig
    fields: VectorFieldSet
    spec: TraceClassSpec
    hurst: HurstParam
    x0: np.ndarray
    projection: np.ndarray
    sampler: FbmSampler
    profile: AssumptionProfile


def _prepare(config: ExperimentConfig) -> _RunContext:
    profile = config.profile()
    S = config.build_semigroup()
    grid = config.grid()
    hurst = HurstParam(config.hurst)
    return _RunContext(
        config=config,
        fields=config.build_fields(S),
        spec=config.trace_class(),
        hurst=hurst,
        x0=config.initial_state(),
        projection=config.projection_matrix(),
        sampler=FbmSampler(hurst, grid, config.sampler),
        profile=profile,
    )


def solve_sample(ctx: _RunContext, index: int):
    """Noise, solution and flows of sample `index`."""
    seed = derive_seed(ctx.config.seed, index)
    noise = sample_qfbm(ctx.spec, ctx.hurst, ctx.sampler.grid, seed, sampler=ctx.sampler)
    solution = solve_mild(ctx.x0, ctx.fields, noise, ctx.profile)
    return solution, solve_flows(solution, ctx.fields)


def _run_sample(ctx: _RunContext, index: int) -> SampleResult:
    result = SampleResult(index=index, spawn_key=[int(ctx.config.seed), index])
    tau = ctx.config.rank_threshold
    try:
        solution, flows = solve_sample(ctx, index)
        worst, worst_ratio = None, np.inf
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            for t in ctx.config.times():
                matrices = malliavin_matrices(solution, flows, ctx.fields, t, ctx.projection)
                key = f"{t:.12g}"
                eig_gamma, eig_C = matrices.eig_gamma, matrices.eig_C
                if not (np.all(np.isfinite(eig_gamma)) and np.all(np.isfinite(eig_C))):
                    raise NumericalError(f"non-finite eigenvalues of gamma_t or C_t at t={key}")
                result.eig_gamma[key] = eig_gamma.tolist()
                result.eig_C[key] = eig_C.tolist()
                result.nondegenerate_by_time[key] = matrices.nondegenerate(tau)
                ratio = matrices.lambda_min / matrices.lambda_max if matrices.lambda_max > 0 else -np.inf
                if worst is None or ratio < worst_ratio:
                    worst, worst_ratio = matrices, ratio
        result.worst_t = worst.t
        result.lambda_min = worst.lambda_min
        result.lambda_max = worst.lambda_max
        result.det = worst.det
        result.nondegenerate = all(result.nondegenerate_by_time.values())
        result.projected_state = (ctx.projection @ solution.at(ctx.config.times()[-1])).tolist()
    except Exception as e:
        logger.debug(f"Sample {index} raised {type(e).__name__}: {e}")
        result = SampleResult(index=index, spawn_key=[int(ctx.config.seed), index], failed=True,
                              error=f"{type(e).__name__}: {e}")
    return result


def _hierarchy(config: ExperimentConfig, fields: VectorFieldSet):
    return build_hierarchy(fields.diffusions, fields.generator_field, config.initial_state(), config.hierarchy_depth)


def hierarchy_ranks(config: ExperimentConfig, fields: VectorFieldSet, hierarchy=None) -> Dict[str, int]:
    hierarchy = hierarchy if hierarchy is not None else _hierarchy(config, fields)
    ranks = {}
    for k in range(hierarchy.k_max + 1):
        ranks[f"V{k}"] = rank_at(hierarchy, tau=config.rank_threshold, level=k)
        ranks[f"TV{k}"] = rank_at(hierarchy, config.projection_matrix(), config.rank_threshold, level=k)
    return ranks


def run_monte_carlo(config: ExperimentConfig, workers: int = 1, backend: str = "loky",
                    progress: bool = False) -> DiagnosticsReport:
    """
    Run config.samples independent samples and aggregate the spectra of C_t and gamma_t.

    Failed samples are recorded and skipped; more than MC_FAILURE_LIMIT of
    them fails the run.
    """
    started = time.perf_counter()
    ctx = _prepare(config)
    report = DiagnosticsReport(config=config.model_dump(mode="json"), seed=config.seed, samples_requested=config.samples)
    hierarchy = _hierarchy(config, ctx.fields)
    report.hierarchy_ranks = hierarchy_ranks(config, ctx.fields, hierarchy)
    n = config.samples
    if n == 0:
        logger.info("No samples requested; returning an empty report")
        report.run = {"timestamp": datetime.now().isoformat(), "runtime_seconds": time.perf_counter() - started}
        return report

    logger.info(f"Running {n} samples on {workers} worker(s)")
    indices = tqdm(range(n), desc="samples", disable=not progress)
    if workers == 1:
        results = [_run_sample(ctx, i) for i in indices]
    else:
        results = Parallel(n_jobs=workers, backend=backend)(delayed(_run_sample)(ctx, i) for i in indices)
    results = sorted(results, key=lambda r: r.index)
    report.results = results

    failed = [r for r in results if r.failed]
    report.failures = len(failed)
    for r in failed:
        logger.warning(f"Sample {r.index} failed: {r.error}")
    if len(failed) > MC_FAILURE_LIMIT * n:
        raise NumericalError(f"{len(failed)} of {n} samples failed (limit {MC_FAILURE_LIMIT:.0%})")

    ok = [r for r in results if not r.failed]
    if ok:
        lam_min = np.array([r.lambda_min for r in ok])
        levels = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)
        report.lambda_min_quantiles = {f"q{int(q * 100):02d}": float(v) for q, v in zip(levels, np.quantile(lam_min, levels))}
        report.nondegenerate_fraction = float(np.mean([r.nondegenerate for r in ok]))
        first = ok[0].index
        solution, flows = solve_sample(ctx, first)
        s = config.transport_s()
        for V in hierarchy.fields(min(1, hierarchy.k_max)):
            report.transport_residuals[V.name] = bracket_transport_check(solution, flows, ctx.fields, V, s)
    if len(ok) >= 2:
        report.kde = kde_estimate(np.array([r.projected_state for r in ok]))

    report.run = {"timestamp": datetime.now().isoformat(), "runtime_seconds": time.perf_counter() - started}
    logger.info(
        f"Monte Carlo done: {len(ok)}/{n} samples, nondegenerate fraction {report.nondegenerate_fraction}"
    )
    return report
