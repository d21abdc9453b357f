# Initialization file for the src package
"""
SPDE Density Lab

Numerics for parabolic SPDEs driven by trace-class fractional Brownian
motion with H > 1/2: path sampling, Young-type mild solutions, Jacobian flows
and their right inverses, Malliavin matrices, Lie-bracket rank checks and
Monte Carlo density diagnostics.

Modules:
- fbm_gaussian: FBM sampling and the Hilbert space of the noise
- semigroup_spectral: diagonal analytic semigroups
- algebraic_increments: increment operators, Holder norms, convolution integrals
- vector_fields: smooth fields, Lie brackets and the bracket hierarchy
- spde_engine: solution, Jacobian and Frechet derivative
- malliavin_core: Malliavin derivative and matrices
- density_lab: Monte Carlo diagnostics
- cli_runner: command line front end
"""

__version__ = "1.0.0"

from .errors import (
    ArgumentError, ConfigError, ConvergenceError, DivergenceError, FeasibilityError, NumericalError,
    RangeAmplificationError, ReportIOError, ResourceLimitError, SamplerError, SimulationError
)
from .fbm_gaussian import FbmSampler, HurstParam, QFbmPath, TimeGrid, TraceClassSpec, sample_fbm, sample_qfbm
from .semigroup_spectral import SpectralSemigroup
from .spde_engine import AssumptionProfile, FlowMatrices, SolutionPath, choose_exponents, solve_flows, solve_mild
from .malliavin_core import MalliavinMatrices, malliavin_matrices, reduced_malliavin
from .density_lab import DiagnosticsReport, ExperimentConfig, run_monte_carlo

__all__ = [
    "ArgumentError",
    "ConfigError",
    "ConvergenceError",
    "DivergenceError",
    "FeasibilityError",
    "NumericalError",
    "RangeAmplificationError",
    "ReportIOError",
    "ResourceLimitError",
    "SamplerError",
    "SimulationError",
    "FbmSampler",
    "HurstParam",
    "QFbmPath",
    "TimeGrid",
    "TraceClassSpec",
    "sample_fbm",
    "sample_qfbm",
    "SpectralSemigroup",
    "AssumptionProfile",
    "FlowMatrices",
    "SolutionPath",
    "choose_exponents",
    "solve_flows",
    "solve_mild",
    "MalliavinMatrices",
    "malliavin_matrices",
    "reduced_malliavin",
    "DiagnosticsReport",
    "ExperimentConfig",
    "run_monte_carlo",
]
