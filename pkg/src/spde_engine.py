"""
Exponent selection, the mild-solution time stepper, the Jacobian flow and
its right inverse.

Every stepper uses the same first-order exponential scheme

    X_{k+1} = S(dt) [X_k + F(X_k) dt + sum_i sqrt(lambda_i) G_i(X_k) dbeta^i_k]

and its linearizations, so that the flows are exact derivatives of the
discrete solution map.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import linalg

try:
    from config.settings import AMPLIFICATION_CAP
except ImportError:
    AMPLIFICATION_CAP = 1e12

from .algebraic_increments import delta_1, holder_norm
from .errors import ArgumentError, DivergenceError, FeasibilityError, ReportIOError
from .fbm_gaussian import HurstParam, QFbmPath, TimeGrid, as_hurst
from .semigroup_spectral import SpectralSemigroup
from .vector_fields import RangeVector, VectorFieldSet

logger = logging.getLogger(__name__)


# Exponent selection

@dataclass
class AssumptionProfile:
    """Exponents of the solution theory and the derivative-scale parameter block."""

    H: float
    kappa: float
    epsilon: float
    eta: float
    gamma_tilde: float
    kappa0: float
    delta: float
    alpha: float
    gamma1: float
    gamma2: float
    c1: float = 1.0
    c2: float = 1.0
    eta_a3: float = 0.0
    beta_tilde: float = 0.0
    feasible: bool = True
    violations: List[str] = field(default_factory=list)

    def check(self) -> List[str]:
        """Names of the violated inequalities (empty when the profile is consistent)."""
        tests = [
            ("gamma_tilde > kappa0", self.gamma_tilde > self.kappa0),
            ("kappa0 > kappa", self.kappa0 > self.kappa),
            ("kappa > 1/4", self.kappa > 0.25),
            ("gamma_tilde + kappa > 1", self.gamma_tilde + self.kappa > 1.0),
            ("gamma_tilde - kappa >= kappa0", self.gamma_tilde - self.kappa >= self.kappa0),
            ("1/2 < gamma_tilde < H", 0.5 < self.gamma_tilde < self.H),
            ("H < gamma_tilde + delta < 1", self.H < self.gamma_tilde + self.delta < 1.0),
            ("alpha > 1 - H", self.alpha > 1.0 - self.H),
            ("alpha < (1 - gamma_1)/2 and (1 - gamma_2)/2",
             self.alpha < min((1.0 - self.gamma1) / 2.0, (1.0 - self.gamma2) / 2.0)),
            ("alpha < beta_tilde < 1/2", self.alpha < self.beta_tilde < 0.5),
        ]
        return [name for name, ok in tests if not ok]

    def to_dict(self) -> dict:
        return asdict(self)


def choose_exponents(H: Union[HurstParam, float], kappa: float) -> AssumptionProfile:
    """
    Pick epsilon, eta with H - epsilon + kappa > 1, eta > 1/2 + epsilon and
    eta < H - kappa, then gamma_tilde = H - epsilon, kappa0 = H - eta and
    delta = (H + 1)/2 - gamma_tilde.

    The admissible epsilon form the interval (0, min(H + kappa - 1, H - kappa - 1/2));
    the midpoint choices below stay inside it.

    Raises:
        ArgumentError: kappa outside (1/4, 1/2)
        FeasibilityError: the constraint set is empty; the message names the violated inequality
    """
    hp = as_hurst(H)
    H = hp.H
    if not 0.25 < kappa < 0.5:
        raise ArgumentError(f"kappa must lie in (1/4, 1/2), got {kappa}")

    violations = []
    if H + kappa - 1.0 <= 0.0:
        violations.append(
            f"H - epsilon + kappa > 1 needs epsilon < H + kappa - 1 = {H + kappa - 1.0:.4g}, which is not positive"
        )
    if H - kappa - 0.5 <= 0.0:
        violations.append(
            f"eta-interval empty: eta > 1/2 + epsilon > 0.5 but eta < H - kappa = {H - kappa:.4g}"
        )
    if violations:
        logger.error(f"No exponents for H={H}, kappa={kappa}: {'; '.join(violations)}")
        raise FeasibilityError(f"infeasible exponents for H={H}, kappa={kappa}: " + "; ".join(violations), violations)

    epsilon = 0.5 * min(H + kappa - 1.0, H - kappa - 0.5)
    eta = 0.5 * ((0.5 + epsilon) + (H - kappa))
    gamma_tilde = H - epsilon
    gamma = 0.5 * min(2.0 * H - 1.0, 0.75)
    upper_alpha = (1.0 - gamma) / 2.0
    alpha = 0.5 * ((1.0 - H) + upper_alpha)
    profile = AssumptionProfile(
        H=H,
        kappa=kappa,
        epsilon=epsilon,
        eta=eta,
        gamma_tilde=gamma_tilde,
        kappa0=H - eta,
        delta=(H + 1.0) / 2.0 - gamma_tilde,
        alpha=alpha,
        gamma1=gamma,
        gamma2=gamma,
        beta_tilde=0.5 * (alpha + 0.5),
    )
    profile.violations = profile.check()
    profile.feasible = not profile.violations
    if not profile.feasible:
        raise FeasibilityError(
            f"exponent block for H={H}, kappa={kappa} violates: " + "; ".join(profile.violations),
            profile.violations,
        )
    logger.info(
        f"Exponents for H={H}, kappa={kappa}: epsilon={epsilon:.4g}, eta={eta:.4g}, "
        f"gamma_tilde={gamma_tilde:.4g}, kappa0={profile.kappa0:.4g}"
    )
    return profile


# Solution paths

@dataclass(eq=False)
class SolutionPath:
    grid: TimeGrid
    states: np.ndarray
    noise: Optional[QFbmPath] = None
    profile: Optional[AssumptionProfile] = None

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    def at(self, t: float) -> np.ndarray:
        return self.states[self.grid.index_of(t)]

    def increment_norm(self, kappa: float) -> float:
        """||delta X||_{kappa,0} on the grid."""
        return holder_norm(delta_1(self.states, self.grid), kappa)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=[f"x_{n + 1}" for n in range(self.states.shape[1])])
        frame.insert(0, "t", self.grid.points)
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise ReportIOError(f"could not write {path}: {e}", path=str(path)) from e
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "SolutionPath":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError) as e:
            raise ReportIOError(f"could not read {path}: {e}", path=str(path)) from e
        return cls(TimeGrid(frame["t"].to_numpy()), frame.drop(columns="t").to_numpy())


def _check_inputs(x0, fields: VectorFieldSet, noise: QFbmPath) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (fields.N,):
        raise ArgumentError(f"x0 must have shape ({fields.N},), got {x0.shape}")
    if noise.spec.M != fields.M:
        raise ArgumentError(f"noise has {noise.spec.M} modes but {fields.M} diffusion fields are given")
    return x0


def _weighted_increments(noise: QFbmPath) -> np.ndarray:
    """(K, M) array of sqrt(lambda_i) dbeta^i_k."""
    return (noise.increments() * noise.spec.sqrt_weights[:, None]).T


def solve_mild(x0, fields: VectorFieldSet, noise: QFbmPath, profile: Optional[AssumptionProfile] = None) -> SolutionPath:
    """
    One-step exponential scheme for the mild equation.

    Raises:
        DivergenceError: a state became non-finite; carries the step index
    """
    x0 = _check_inputs(x0, fields, noise)
    S = fields.semigroup
    grid = noise.grid
    dts = grid.widths
    dbw = _weighted_increments(noise)
    states = np.empty((grid.points.size, fields.N))
    states[0] = x0
    x = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k, dt in enumerate(dts):
            update = x + fields.drift(x) * dt + dbw[k] @ fields.diffusion_values(x)
            x = S.apply_s(dt, update)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"solution became non-finite at step {k + 1} (t={grid.points[k + 1]:g})", step=k + 1)
            states[k + 1] = x
    return SolutionPath(grid, states, noise, profile)


@dataclass
class ConvergenceReport:
    steps: List[int]
    differences: List[float]
    ratios: List[float]


def convergence_study(x0, fields: VectorFieldSet, fine_noise: QFbmPath, profile: Optional[AssumptionProfile] = None,
                      levels: int = 3) -> ConvergenceReport:
    """
    Solve on the fine grid and on its 2x, 4x, ... coarsenings of the same
    noise sample, and compare successive solutions on the coarser grid.

    differences[j] compares the solutions with steps[j] and steps[j+1] cells,
    ordered from coarse to fine.
    """
    if levels < 1:
        raise ArgumentError(f"levels must be at least 1, got {levels}")
    factors = [2 ** j for j in range(levels, -1, -1)]
    solutions = [solve_mild(x0, fields, fine_noise.coarsen(f), profile) if f > 1 else solve_mild(x0, fields, fine_noise, profile)
                 for f in factors]
    differences = []
    for coarse, fine in zip(solutions[:-1], solutions[1:]):
        restricted = fine.states[::2]
        differences.append(float(np.max(np.linalg.norm(restricted - coarse.states, axis=1))))
    ratios = [a / b if b > 0 else float("inf") for a, b in zip(differences[:-1], differences[1:])]
    report = ConvergenceReport([s.grid.steps for s in solutions], differences, ratios)
    logger.info(f"Self-convergence differences {['%.3e' % d for d in differences]}")
    return report


# Flows

@dataclass(eq=False)
class FlowMatrices:
    """
    Jacobian J_k, and when computed, P_k and R_k with J_k = S(t_k) P_k,
    P_k R_k = Id and J+_k = R_k S(-t_k).
    """

    grid: TimeGrid
    semigroup: SpectralSemigroup
    J: np.ndarray
    P: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None

    @property
    def U(self) -> np.ndarray:
        self._require_inverse()
        return self.R - np.eye(self.R.shape[1])[None]

    def _require_inverse(self):
        if self.R is None:
            raise ArgumentError("right-inverse flow not computed; use solve_right_inverse")

    def right_inverse_apply(self, k: int, v: Union[RangeVector, np.ndarray], amp_cap: float = AMPLIFICATION_CAP) -> np.ndarray:
        """
        J+_k v. A RangeVector S(T0) w is handled as R_k S(T0 - t_k) w; a plain
        vector goes through the capped S(-t_k).
        """
        self._require_inverse()
        t = self.grid.points[k]
        if isinstance(v, RangeVector):
            pulled = v.pulled_back(t, amp_cap)
        else:
            pulled = self.semigroup.apply_s_inverse(t, v, amp_cap=amp_cap)
        return self.R[k] @ pulled

    def product_residual(self) -> float:
        """max_k ||P_k R_k - Id||."""
        self._require_inverse()
        eye = np.eye(self.P.shape[1])
        return float(max(np.linalg.norm(p @ r - eye, 2) for p, r in zip(self.P, self.R)))

    def flow_consistency(self) -> float:
        """max_k ||J_k - S(t_k) P_k||."""
        self._require_inverse()
        return float(max(
            np.linalg.norm(j - self.semigroup.apply_s(t, p), 2) for j, p, t in zip(self.J, self.P, self.grid.points)
        ))

    def to_frame(self, which: str = "J") -> pd.DataFrame:
        matrices = getattr(self, which)
        if matrices is None:
            raise ArgumentError(f"flow component {which} was not computed")
        n = matrices.shape[1]
        t = np.repeat(self.grid.points, n * n)
        row = np.tile(np.repeat(np.arange(1, n + 1), n), self.grid.points.size)
        col = np.tile(np.arange(1, n + 1), self.grid.points.size * n)
        return pd.DataFrame({"t": t, "row": row, "col": col, "value": matrices.reshape(-1)})

    def to_csv(self, path: Union[str, Path], which: str = "J") -> Path:
        path = Path(path)
        try:
            self.to_frame(which).to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise ReportIOError(f"could not write {path}: {e}", path=str(path)) from e
        return path


def _full(raw_and_tau, S: SpectralSemigroup) -> np.ndarray:
    raw, tau = raw_and_tau
    return S.apply_s(tau, raw)


def step_operator(fields: VectorFieldSet, x: np.ndarray, dt: float, dbw: np.ndarray) -> np.ndarray:
    """N_k = grad F(x) dt + sum_i sqrt(lambda_i) dbeta^i grad G_i(x)."""
    S = fields.semigroup
    out = _full(fields.drift_jacobian(x), S) * dt
    for w, jac in zip(dbw, fields.diffusion_jacobians(x)):
        out = out + w * _full(jac, S)
    return out


def conjugated_step_operator(fields: VectorFieldSet, x: np.ndarray, dt: float, dbw: np.ndarray, t: float,
                             amp_cap: float = AMPLIFICATION_CAP) -> np.ndarray:
    """M_k = S(-t) N_k S(t), through the preimages: S(T0 - t) grad W S(t)."""
    S = fields.semigroup
    right = S.factors(t)[None, :]

    def conj(raw_and_tau):
        raw, tau = raw_and_tau
        if not np.any(raw):
            return np.zeros_like(raw)
        if not np.any(raw - np.diag(np.diag(raw))):
            # diagonal operators commute with S
            return S.apply_s(tau, raw)
        return S.shift(tau - t, raw, amp_cap=amp_cap) * right

    out = conj(fields.drift_jacobian(x)) * dt
    for w, jac in zip(dbw, fields.diffusion_jacobians(x)):
        out = out + w * conj(jac)
    return out


def solve_jacobian(solution: SolutionPath, fields: VectorFieldSet) -> FlowMatrices:
    """J_{k+1} = S(dt)(Id + N_k) J_k, J_0 = Id."""
    noise = solution.noise
    if noise is None:
        raise ArgumentError("the solution path does not carry its driving noise")
    S = fields.semigroup
    grid = solution.grid
    dbw = _weighted_increments(noise)
    J = np.empty((grid.points.size, fields.N, fields.N))
    J[0] = np.eye(fields.N)
    eye = np.eye(fields.N)
    for k, dt in enumerate(grid.widths):
        J[k + 1] = S.apply_s(dt, (eye + step_operator(fields, solution.states[k], dt, dbw[k])) @ J[k])
        if not np.all(np.isfinite(J[k + 1])):
            raise DivergenceError(f"Jacobian became non-finite at step {k + 1}", step=k + 1)
    return FlowMatrices(grid, S, J)


def solve_right_inverse(solution: SolutionPath, fields: VectorFieldSet, flows: Optional[FlowMatrices] = None,
                        amp_cap: float = AMPLIFICATION_CAP) -> FlowMatrices:
    """
    P_{k+1} = (Id + M_k) P_k and R_{k+1} = R_k (Id + M_k)^{-1} with
    M_k = S(-t_k) N_k S(t_k); R = Id + U.

    Raises:
        RangeAmplificationError: a conjugation needs S(-t) beyond the cap
            (a field without enough smoothing for the horizon)
    """
    flows = flows or solve_jacobian(solution, fields)
    noise = solution.noise
    grid = solution.grid
    dbw = _weighted_increments(noise)
    n = fields.N
    eye = np.eye(n)
    P = np.empty((grid.points.size, n, n))
    R = np.empty_like(P)
    P[0] = eye
    R[0] = eye
    for k, dt in enumerate(grid.widths):
        step = eye + conjugated_step_operator(fields, solution.states[k], dt, dbw[k], grid.points[k], amp_cap)
        P[k + 1] = step @ P[k]
        R[k + 1] = linalg.solve(step.T, R[k].T).T
        if not (np.all(np.isfinite(P[k + 1])) and np.all(np.isfinite(R[k + 1]))):
            raise DivergenceError(f"right-inverse flow became non-finite at step {k + 1}", step=k + 1)
    logger.debug(f"Right-inverse flow computed over {grid.steps} steps")
    return FlowMatrices(grid, fields.semigroup, flows.J, P, R)


def solve_flows(solution: SolutionPath, fields: VectorFieldSet, amp_cap: float = AMPLIFICATION_CAP) -> FlowMatrices:
    return solve_right_inverse(solution, fields, solve_jacobian(solution, fields), amp_cap)


# Frechet derivative in the noise

def frechet_directional(solution: SolutionPath, fields: VectorFieldSet, direction: QFbmPath) -> np.ndarray:
    """
    Derivative of the solution along the noise direction h:

        Y_{k+1} = S(dt)[(Id + N_k) Y_k + sum_i sqrt(lambda_i) G_i(X_k) dh^i_k],  Y_0 = 0.
    """
    noise = solution.noise
    if direction.values.shape != noise.values.shape:
        raise ArgumentError("direction must live on the grid and modes of the driving noise")
    S = fields.semigroup
    dbw = _weighted_increments(noise)
    dhw = _weighted_increments(direction)
    Y = np.zeros_like(solution.states)
    for k, dt in enumerate(solution.grid.widths):
        x = solution.states[k]
        drive = Y[k] + step_operator(fields, x, dt, dbw[k]) @ Y[k] + dhw[k] @ fields.diffusion_values(x)
        Y[k + 1] = S.apply_s(dt, drive)
        if not np.all(np.isfinite(Y[k + 1])):
            raise DivergenceError(f"Frechet derivative became non-finite at step {k + 1}", step=k + 1)
    return Y


def frechet_kernel(solution: SolutionPath, fields: VectorFieldSet, t_index: int) -> np.ndarray:
    """
    Psi^i_{t,u_k} for t = t_{t_index}, as an (M, t_index + 1, N) array, with
    Psi^i_{t,u_k} = Phi_{t <- k+1} S(dt_k) G_i(X_k) and Psi at u = t equal to zero,
    so that Y_t = sum_i sqrt(lambda_i) sum_k Psi^i_{t,u_k} dh^i_k.
    """
    grid = solution.grid
    if not 0 <= t_index <= grid.steps:
        raise ArgumentError(f"t_index {t_index} outside 0..{grid.steps}")
    S = fields.semigroup
    dbw = _weighted_increments(solution.noise)
    psi = np.zeros((fields.M, t_index + 1, fields.N))
    back = np.eye(fields.N)
    eye = np.eye(fields.N)
    for k in range(t_index - 1, -1, -1):
        dt = grid.widths[k]
        x = solution.states[k]
        psi[:, k] = (back @ S.apply_s(dt, fields.diffusion_values(x).T)).T
        back = back @ S.apply_s(dt, eye + step_operator(fields, x, dt, dbw[k]))
    return psi
