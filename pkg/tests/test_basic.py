"""
Basic checks for the SPDE density lab: settings, packaging and the default experiment
"""
import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))


def test_settings_import():
    from config import settings
    assert settings.CONFIG_SCHEMA_VERSION == 1
    assert 0 < settings.RANK_THRESHOLD < 1
    assert settings.LOG_FORMAT


def test_requirements_exist():
    base_dir = os.path.dirname(os.path.dirname(__file__))
    assert os.path.exists(os.path.join(base_dir, 'requirements.txt'))


def test_package_exports():
    import src
    for name in src.__all__:
        assert hasattr(src, name), name


def test_default_experiment_is_feasible():
    from config.settings import DEFAULT_CONFIG_PATH
    from src.cli_runner import build_config, read_config_file

    config = build_config(read_config_file(DEFAULT_CONFIG_PATH))
    profile = config.profile()
    assert config.hurst == 0.9 and config.kappa == 0.3
    assert profile.alpha == pytest.approx(0.20625)
    assert config.projection == [1]


def test_exit_codes_are_distinct():
    from src.errors import ConfigError, DivergenceError, FeasibilityError, ReportIOError, SimulationError
    assert SimulationError.exit_code == 1
    assert ConfigError.exit_code == 2
    assert FeasibilityError.exit_code == 3
    assert DivergenceError.exit_code == 4
    assert ReportIOError.exit_code == 5


if __name__ == "__main__":
    pytest.main([__file__])
