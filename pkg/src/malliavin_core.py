"""
Malliavin derivative of the solution, the reduced Malliavin matrix C_t and
the projected matrix gamma_t = (T J_t) C_t (T J_t)^*.

Weight convention: G_l denotes the field attached to noise mode l without the
sqrt(lambda_l) factor, and C_t = sum_l lambda_l alpha_H int int q_l(u) q_l(v)^T
|u - v|^{2H-2} du dv with q_l(u) = J+_u G_l(X_u).

Node values on the grid are turned into cell values by the trapezoid average
(q(u_k) + q(u_{k+1}))/2; both constructions of gamma_t use that rule.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .errors import ArgumentError
from .fbm_gaussian import HurstParam, TimeGrid, TraceClassSpec, as_hurst, cell_weight_matrix, inner_h
from .spde_engine import FlowMatrices, SolutionPath, step_operator
from .vector_fields import VectorFieldSet

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MalliavinKernel:
    """D^i_{r_k} X_t for a fixed t and all grid nodes r_k <= t, as an (M, k_t + 1, N) array."""

    grid: TimeGrid
    t_index: int
    values: np.ndarray

    def at(self, r_index: int, mode: int) -> np.ndarray:
        if r_index > self.t_index:
            return np.zeros(self.values.shape[2])
        return self.values[mode, r_index]

    def cell_values(self) -> np.ndarray:
        return 0.5 * (self.values[:, :-1] + self.values[:, 1:])


@dataclass(eq=False)
class MalliavinMatrices:
    t: float
    C: np.ndarray
    gamma: np.ndarray
    projection: np.ndarray

    @property
    def eig_C(self) -> np.ndarray:
        return linalg.eigvalsh(self.C)

    @property
    def eig_gamma(self) -> np.ndarray:
        return linalg.eigvalsh(self.gamma)

    @property
    def lambda_min(self) -> float:
        return float(self.eig_gamma[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eig_gamma[-1])

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.gamma))

    def is_psd(self, tol: float = 1e-10) -> bool:
        return bool(self.eig_gamma[0] >= -tol and self.eig_C[0] >= -tol * max(1.0, abs(self.eig_C[-1])))

    def nondegenerate(self, tau: float) -> bool:
        """lambda_max > 0 and lambda_min > tau * lambda_max."""
        return self.lambda_max > 0 and self.lambda_min > tau * self.lambda_max


def _symmetric(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _t_index(solution: SolutionPath, t: float) -> int:
    return solution.grid.index_of(t)


def transported_diffusions(solution: SolutionPath, flows: FlowMatrices, fields: VectorFieldSet, t_index: int) -> np.ndarray:
    """q_l(u_k) = J+_{u_k} G_l(X_{u_k}) for k <= t_index, shape (M, t_index + 1, N)."""
    q = np.empty((fields.M, t_index + 1, fields.N))
    for k in range(t_index + 1):
        for l, g in enumerate(fields.diffusions):
            q[l, k] = flows.right_inverse_apply(k, g.range_derivative(solution.states[k]))
    return q


def malliavin_derivative(solution: SolutionPath, flows: FlowMatrices, fields: VectorFieldSet, r: float, t: float,
                         mode: int, method: str = "representation") -> np.ndarray:
    """
    D^mode_r X_t.

    "representation" evaluates J_t J+_r G_mode(X_r) through the preimage of G;
    "direct" transports G_mode(X_r) with the linearized scheme from r to t.
    Returns zero for r > t.
    """
    if not 0 <= mode < fields.M:
        raise ArgumentError(f"mode {mode} outside 0..{fields.M - 1}")
    if r > t:
        return np.zeros(fields.N)
    i_r, i_t = _t_index(solution, r), _t_index(solution, t)
    g = fields.diffusions[mode]
    x_r = solution.states[i_r]
    if method == "representation":
        return flows.J[i_t] @ flows.right_inverse_apply(i_r, g.range_derivative(x_r))
    if method == "direct":
        return _transport(solution, fields, g(x_r), i_r, i_t)
    raise ArgumentError(f"unknown method {method!r}")


def _transport(solution: SolutionPath, fields: VectorFieldSet, z: np.ndarray, start: int, stop: int) -> np.ndarray:
    S = fields.semigroup
    noise = solution.noise
    dbw = (noise.increments() * noise.spec.sqrt_weights[:, None]).T
    for k in range(start, stop):
        dt = solution.grid.widths[k]
        z = S.apply_s(dt, z + step_operator(fields, solution.states[k], dt, dbw[k]) @ z)
    return z


def malliavin_kernel(solution: SolutionPath, flows: FlowMatrices, fields: VectorFieldSet, t: float,
                     method: str = "representation") -> MalliavinKernel:
    """All D^l_r X_t for grid nodes r <= t."""
    i_t = _t_index(solution, t)
    if method == "representation":
        values = np.einsum("ij,lkj->lki", flows.J[i_t], transported_diffusions(solution, flows, fields, i_t))
    elif method == "direct":
        values = np.empty((fields.M, i_t + 1, fields.N))
        for k in range(i_t + 1):
            G = fields.diffusion_values(solution.states[k])
            for l in range(fields.M):
                values[l, k] = _transport(solution, fields, G[l], k, i_t)
    else:
        raise ArgumentError(f"unknown method {method!r}")
    return MalliavinKernel(solution.grid, i_t, values)


def reduced_malliavin(solution: SolutionPath, flows: FlowMatrices, fields: VectorFieldSet, t: float,
                      H: Optional[Union[HurstParam, float]] = None) -> np.ndarray:
    """C_t, an (N, N) symmetric positive semidefinite matrix."""
    hp = as_hurst(H if H is not None else solution.noise.hurst)
    i_t = _t_index(solution, t)
    if i_t == 0:
        return np.zeros((fields.N, fields.N))
    q = transported_diffusions(solution, flows, fields, i_t)
    cells = 0.5 * (q[:, :-1] + q[:, 1:])
    W = cell_weight_matrix(TimeGrid(solution.grid.points[:i_t + 1]), hp)
    lam = solution.noise.spec.eigenvalues
    C = np.einsum("l,lkn,kj,ljm->nm", lam, cells, W, cells)
    return _symmetric(C)


def gamma_matrix(C: np.ndarray, J_t: np.ndarray, T: np.ndarray) -> np.ndarray:
    """gamma_t = (T J_t) C (T J_t)^T."""
    C = np.asarray(C, dtype=float)
    J_t = np.asarray(J_t, dtype=float)
    T = np.atleast_2d(np.asarray(T, dtype=float))
    n = C.shape[0]
    if C.shape != (n, n) or J_t.shape != (n, n) or T.shape[1] != n:
        raise ArgumentError(f"shape mismatch: C {C.shape}, J {J_t.shape}, T {T.shape}")
    TJ = T @ J_t
    return _symmetric(TJ @ C @ TJ.T)


def direct_gamma(kernel: MalliavinKernel, T: np.ndarray, H: Union[HurstParam, float], spec: TraceClassSpec) -> np.ndarray:
    """gamma_ij = sum_l lambda_l <D^l T_i(X_t), D^l T_j(X_t)>_H, assembled entry by entry."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if kernel.t_index == 0:
        return np.zeros((T.shape[0], T.shape[0]))
    grid = TimeGrid(kernel.grid.points[:kernel.t_index + 1])
    projected = np.einsum("dn,lkn->lkd", T, kernel.cell_values())
    d = T.shape[0]
    gamma = np.zeros((d, d))
    for l, lam in enumerate(spec.eigenvalues):
        for i in range(d):
            for j in range(i, d):
                value = lam * inner_h(projected[l, :, i], projected[l, :, j], H, grid)
                gamma[i, j] += value
                if i != j:
                    gamma[j, i] += value
    return gamma


def malliavin_matrices(solution: SolutionPath, flows: FlowMatrices, fields: VectorFieldSet, t: float,
                       projection: np.ndarray) -> MalliavinMatrices:
    C = reduced_malliavin(solution, flows, fields, t)
    T = np.atleast_2d(np.asarray(projection, dtype=float))
    gamma = gamma_matrix(C, flows.J[_t_index(solution, t)], T)
    return MalliavinMatrices(t=float(t), C=C, gamma=gamma, projection=T)
