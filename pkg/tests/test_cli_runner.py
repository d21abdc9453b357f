"""
Tests for experiment files, overrides, exit codes and result files
"""
import json
import os
import sys

import pandas as pd
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.cli_runner import (
    RawConfig, apply_overrides, build_config, config_from_manifest, emit_report, main, read_config_text,
    render_config
)
from src.density_lab import DiagnosticsReport, ExperimentConfig, run_monte_carlo
from src.errors import ConfigError, ReportIOError

SMALL = """\
[experiment]
H = 0.9
kappa = 0.3   # inside (1/4, 1/2)
horizon = 0.5
steps = 16
galerkin_modes = 3
noise_modes = 2
samples = 3
t_values = 0.25, 0.5
projection = 1

[drift]
kind = linear
B = -1, 0, 0; 0, -1, 0; 0, 0, -1
smoothing = 0.5
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL, encoding="utf-8")
    return path


class TestExperimentFiles:

    def test_reads_aliases_lists_and_matrices(self):
        config = build_config(read_config_text(SMALL))
        assert config.hurst == 0.9
        assert config.steps == 16
        assert config.t_values == [0.25, 0.5]
        assert config.projection == [1]
        assert config.drift.kind == "linear"
        assert config.drift.B[1] == [0.0, -1.0, 0.0]

    def test_diffusion_sections(self):
        text = SMALL + "\n[diffusion.1]\nkind = constant\na = 1, 0, 0\n\n[diffusion.2]\nkind = zero\n"
        config = build_config(read_config_text(text))
        assert [d.kind for d in config.diffusions] == ["constant", "zero"]
        with pytest.raises(ConfigError):
            build_config(read_config_text(SMALL + "\n[diffusion.2]\nkind = zero\n"))

    def test_unknown_key_reports_its_line(self):
        with pytest.raises(ConfigError) as info:
            build_config(read_config_text(SMALL.replace("samples = 3", "samples = 3\ncolour = red")))
        assert info.value.line == 9

    def test_invalid_value_reports_its_line(self):
        with pytest.raises(ConfigError) as info:
            build_config(read_config_text(SMALL.replace("H = 0.9", "H = 1.2")))
        assert info.value.line == 2

    def test_malformed_files(self):
        with pytest.raises(ConfigError) as info:
            read_config_text("hurst = 0.9\n")
        assert info.value.line == 1
        with pytest.raises(ConfigError):
            read_config_text("[experiment]\nhurst = 0.9\nhurst = 0.8\n")
        with pytest.raises(ConfigError) as info:
            read_config_text("[experiment]\nhurst = 0.9\n[solver]\norder = 2\n")
        assert info.value.line == 4
        with pytest.raises(ConfigError):
            read_config_text("[drift]\nB = 1, x; 0, 1\n")

    def test_overrides(self):
        raw = apply_overrides(read_config_text(SMALL), ["seed=7", "drift.kind=zero", "x0=1,2,3"])
        config = build_config(raw)
        assert config.seed == 7
        assert config.drift.kind == "zero"
        assert config.x0 == [1.0, 2.0, 3.0]
        with pytest.raises(ConfigError):
            apply_overrides(RawConfig(), ["seed"])

    def test_render_reads_back(self):
        config = build_config(read_config_text(SMALL + "\n[diffusion.1]\nkind = constant\na = 1, 0, 0\n"
                                                       "\n[diffusion.2]\nkind = quadratic\n"
                                                       "Q = 1,0,0;0,0,0;0,0,0 | 0,0,0;0,1,0;0,0,0 | 0,0,0;0,0,0;0,0,1\n"))
        again = build_config(read_config_text(render_config(config)))
        assert again.config_hash() == config.config_hash()


class TestExitCodes:

    def test_infeasible_exponents(self, config_file, tmp_path):
        argv = ["hormander", "--config", str(config_file), "--set", "H=0.75", "--set", "kappa=0.3",
                "--output", str(tmp_path / "out")]
        assert main(argv) == 3

    def test_invalid_hurst(self, config_file):
        assert main(["hormander", "--config", str(config_file), "--set", "H=1.2"]) == 2

    def test_bad_command_line(self, config_file):
        assert main(["integrate", "--config", str(config_file)]) == 2
        assert main(["solve", "--config", str(config_file), "--workers", "0"]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["audit", "--config", str(tmp_path / "absent.cfg")]) == 2

    def test_montecarlo_writes_results(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert main(["montecarlo", "--config", str(config_file), "--output", str(out), "--workers", "1"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"]["spawn_keys"] == [[0, 0], [0, 1], [0, 2]]
        frame = pd.read_csv(out / "gamma_eigs.csv")
        assert list(frame.columns) == ["sample", "t", "k", "eigenvalue"]
        assert sorted(frame["t"].unique()) == [0.25, 0.5]
        assert (out / "kde_1.csv").exists()

    @pytest.mark.parametrize("command, produced", [
        ("sample-fbm", "qfbm.csv"),
        ("solve", "solution.csv"),
        ("flows", "right_inverse.csv"),
        ("malliavin", "malliavin.json"),
        ("audit", "audit.json"),
    ])
    def test_subcommands(self, config_file, tmp_path, command, produced):
        out = tmp_path / "out"
        assert main([command, "--config", str(config_file), "--output", str(out), "--workers", "1"]) == 0
        assert (out / produced).exists()


class TestReports:

    def test_empty_report(self, tmp_path):
        config = ExperimentConfig(steps=16, galerkin_modes=3, noise_modes=2, samples=0)
        written = emit_report(run_monte_carlo(config), tmp_path, config)
        assert set(written) == {"report", "gamma_eigs", "manifest"}
        assert pd.read_csv(written["gamma_eigs"]).empty

    def test_existing_files_are_backed_up(self, tmp_path):
        config = ExperimentConfig(steps=16, galerkin_modes=3, noise_modes=2, samples=0)
        report = run_monte_carlo(config)
        emit_report(report, tmp_path, config)
        emit_report(report, tmp_path, config)
        assert (tmp_path / "report.json.bak").exists()
        assert (tmp_path / "manifest.json.bak").exists()

    def test_manifest_reproduces_the_config(self, tmp_path):
        config = build_config(read_config_text(SMALL))
        report = DiagnosticsReport(config=config.model_dump(mode="json"), seed=config.seed, samples_requested=0)
        written = emit_report(report, tmp_path)
        loaded = config_from_manifest(written["manifest"])
        assert loaded.config_hash() == config.config_hash()
        manifest = json.loads(written["manifest"].read_text())
        assert manifest["config_hash"] == config.config_hash()
        assert manifest["report_hash"] == report.content_hash()

    def test_manifest_reproduces_the_run(self, tmp_path):
        config = build_config(read_config_text(SMALL))
        first = run_monte_carlo(config)
        written = emit_report(first, tmp_path, config)
        rerun = run_monte_carlo(config_from_manifest(written["manifest"]))
        manifest = json.loads(written["manifest"].read_text())
        assert manifest["report_hash"] == rerun.content_hash()
        stored = json.loads(written["report"].read_text())
        stored.pop("run")
        payload = json.loads(json.dumps(rerun.to_dict()))
        payload.pop("run")
        assert stored == payload

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        config = ExperimentConfig(steps=16, galerkin_modes=3, noise_modes=2, samples=0)
        with pytest.raises(ReportIOError) as info:
            emit_report(run_monte_carlo(config), blocker / "out", config)
        assert info.value.exit_code == 5
        assert "blocker" in info.value.path

    def test_unreadable_manifest(self, tmp_path):
        with pytest.raises(ReportIOError):
            config_from_manifest(tmp_path / "manifest.json")


if __name__ == "__main__":
    pytest.main([__file__])
