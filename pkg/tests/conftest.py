"""
Shared fixtures: a small heat-equation truncation with smoothed sine diffusions and seeded noise
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.fbm_gaussian import TimeGrid, TraceClassSpec, sample_qfbm
from src.semigroup_spectral import SpectralSemigroup
from src.vector_fields import LinearField, VectorFieldSet, coupled_sine_diffusions


@pytest.fixture
def S():
    return SpectralSemigroup.dirichlet_laplacian(4)


@pytest.fixture
def fields(S):
    return VectorFieldSet(S, coupled_sine_diffusions(S, 2, 0.5), LinearField(S, -0.5 * np.eye(4), smoothing=0.5))


@pytest.fixture
def noise():
    return sample_qfbm(TraceClassSpec.power_law(2), 0.75, TimeGrid.uniform(0.5, 64), seed=0)
