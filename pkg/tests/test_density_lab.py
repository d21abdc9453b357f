"""
Tests for the experiment configuration, the bracket transport check, the KDE and the Monte Carlo driver
"""
import os
import sys

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src import density_lab
from src.density_lab import (
    ExperimentConfig, FieldConfig, _prepare, _run_sample, bracket_transport_check, hierarchy_ranks, kde_estimate,
    run_monte_carlo, solve_sample
)
from src.errors import ArgumentError, NumericalError
from src.fbm_gaussian import TimeGrid, TraceClassSpec, sample_qfbm
from src.semigroup_spectral import SpectralSemigroup
from src.spde_engine import solve_flows, solve_mild
from src.vector_fields import ConstantField, LieBracket, VectorFieldSet, build_hierarchy


def small_config(**overrides) -> ExperimentConfig:
    base = dict(hurst=0.9, kappa=0.3, horizon=0.5, steps=32, galerkin_modes=4, noise_modes=2, samples=4, seed=0)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestExperimentConfig:

    def test_defaults(self):
        config = ExperimentConfig()
        assert config.times() == [config.horizon]
        assert config.transport_s() == pytest.approx(config.horizon / 2)
        np.testing.assert_allclose(config.initial_state(), 1.0 / np.arange(1, config.galerkin_modes + 1))
        assert config.projection_matrix().shape == (1, config.galerkin_modes)
        assert len(config.build_fields().diffusions) == config.noise_modes

    @pytest.mark.parametrize("bad", [
        {"colour": "red"},
        {"hurst": 1.2},
        {"hurst": 0.5},
        {"steps": 0},
        {"x0": [1.0, 2.0]},
        {"projection": [5]},
        {"t_values": [0.3]},
        {"schema_version": 2},
        {"transport_time": 0.75},
        {"diffusions": [{"kind": "zero"}]},
    ])
    def test_rejects_invalid_values(self, bad):
        with pytest.raises(ValidationError):
            small_config(**bad)

    def test_field_config_rejects_unknown_coefficient(self):
        with pytest.raises(ValidationError):
            FieldConfig(kind="linear", D=[[1.0]])
        with pytest.raises(ArgumentError):
            FieldConfig(kind="linear").build(small_config().build_semigroup(), 0.5, "F")

    def test_hash_follows_content(self):
        a = small_config()
        assert a.config_hash() == small_config().config_hash()
        assert a.config_hash() != small_config(seed=1).config_hash()
        assert '"hurst":0.9' in a.canonical_json()


class TestBracketTransport:

    def test_exact_at_time_zero(self):
        ctx = _prepare(small_config())
        solution, flows = solve_sample(ctx, 0)
        V = ctx.fields.diffusions[0]
        assert bracket_transport_check(solution, flows, ctx.fields, V, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_residual_shrinks_with_the_step(self):
        residuals = []
        for steps in (32, 256):
            ctx = _prepare(small_config(steps=steps))
            solution, flows = solve_sample(ctx, 0)
            V = ctx.fields.diffusions[0]
            residuals.append(bracket_transport_check(solution, flows, ctx.fields, V, 0.25))
            scale = np.linalg.norm(V(solution.states[0]))
        assert residuals[1] < 0.1 * scale
        assert residuals[1] < residuals[0]

    def test_constant_field_without_drift_matches_closed_form(self):
        """Constant G and V, F = 0: J+_s V = S(-s) V = V - int_0^s S(-r) A V dr"""
        S = SpectralSemigroup.dirichlet_laplacian(3)
        fields = VectorFieldSet(S, [ConstantField(S, [1.0, 0.5, 0.0], smoothing=0.5, name="G1")])
        V = ConstantField(S, [0.3, -1.0, 2.0], smoothing=0.5, name="V")
        residuals = []
        for steps in (64, 128):
            noise = sample_qfbm(TraceClassSpec.power_law(1), 0.75, TimeGrid.uniform(0.5, steps), seed=4)
            solution = solve_mild(np.ones(3), fields, noise)
            flows = solve_flows(solution, fields)
            k = solution.grid.index_of(0.25)
            np.testing.assert_allclose(flows.right_inverse_apply(k, V.range_derivative(solution.states[k])),
                                       S.apply_s(0.25, np.array([0.3, -1.0, 2.0])), rtol=1e-12)
            residuals.append(bracket_transport_check(solution, flows, fields, V, 0.25))
        assert residuals[0] < 1e-2 * np.linalg.norm(S.apply_s(0.25, np.array([0.3, -1.0, 2.0])))
        assert residuals[1] < 0.35 * residuals[0]

    def test_first_level_brackets_are_transported(self):
        config = small_config(steps=128)
        ctx = _prepare(config)
        solution, flows = solve_sample(ctx, 0)
        hierarchy = build_hierarchy(ctx.fields.diffusions, ctx.fields.generator_field, config.initial_state(), 1)
        brackets = [V for V in hierarchy.fields(1) if isinstance(V, LieBracket)]
        assert len(brackets) == 4
        for V in brackets:
            assert bracket_transport_check(solution, flows, ctx.fields, V, 0.0) == pytest.approx(0.0, abs=1e-12)
            residual = bracket_transport_check(solution, flows, ctx.fields, V, 0.25)
            k = solution.grid.index_of(0.25)
            transported = flows.right_inverse_apply(k, V.range_derivative(solution.states[k]))
            assert np.isfinite(residual)
            assert residual < 0.1 * np.linalg.norm(transported)


class TestKde:

    def test_normal_samples(self):
        x = np.random.default_rng(0).standard_normal(5000)
        (curve,) = kde_estimate(x)
        grid = np.asarray(curve.grid)
        density = np.asarray(curve.density)
        inside = (grid >= -3) & (grid <= 3)
        assert np.max(np.abs(density[inside] - stats.norm.pdf(grid[inside]))) < 0.05
        assert integrate.trapezoid(density, grid) == pytest.approx(1.0, abs=1e-3)
        assert not curve.degenerate

    def test_constant_coordinate_is_a_spike(self):
        data = np.column_stack([np.linspace(-1.0, 1.0, 20), np.full(20, 0.25)])
        curves = kde_estimate(data, grid_points=64)
        assert [c.coordinate for c in curves] == [1, 2]
        assert curves[1].degenerate
        assert len(curves[1].grid) == 64

    def test_needs_two_samples(self):
        with pytest.raises(ArgumentError):
            kde_estimate([[1.0, 2.0]])


class TestMonteCarlo:

    def test_no_samples(self):
        report = run_monte_carlo(small_config(samples=0))
        assert report.sample_count == 0
        assert report.nondegenerate_fraction is None
        assert report.kde == []
        assert report.hierarchy_ranks["V0"] == 2

    def test_bracket_generating_fields_are_nondegenerate(self):
        config = small_config(hierarchy_depth=1)
        report = run_monte_carlo(config)
        assert report.failures == 0
        assert report.nondegenerate_fraction == 1.0
        assert report.lambda_min_quantiles["q00"] > 0
        assert report.hierarchy_ranks["V1"] == 4
        assert report.hierarchy_ranks["TV1"] == 1
        fields = config.build_fields()
        labels = build_hierarchy(fields.diffusions, fields.generator_field,
                                 config.initial_state(), 1).labels(1)
        assert set(report.transport_residuals) == set(labels)
        assert len(labels) == 6
        assert all(np.isfinite(v) for v in report.transport_residuals.values())
        assert len(report.kde) == 1
        for result in report.results:
            assert list(result.eig_gamma) == ["0.5"]
            assert len(result.eig_C["0.5"]) == 4
            assert result.worst_t == 0.5

    def test_two_coordinates_are_nondegenerate_at_every_time(self):
        """Short horizon so the heat damping of mode 2 stays far above the rank threshold"""
        config = small_config(horizon=0.0625, steps=32, samples=64, projection=[1, 2], t_values=[0.03125, 0.0625])
        report = run_monte_carlo(config)
        assert report.failures == 0
        assert report.nondegenerate_fraction == 1.0
        for result in report.results:
            assert set(result.nondegenerate_by_time) == {"0.03125", "0.0625"}
            assert all(result.nondegenerate_by_time.values())
            assert result.worst_t in (0.03125, 0.0625)
            gamma = result.eig_gamma[f"{result.worst_t:.12g}"]
            assert result.lambda_min == gamma[0] and result.lambda_max == gamma[-1]
            assert result.lambda_min > config.rank_threshold * result.lambda_max
            for eigs in result.eig_C.values():
                assert len(eigs) == 4
                assert eigs[-1] > 0

    def test_two_coordinates_degenerate_control(self):
        """The same run with one constant noise direction e_1 fails the check on coordinates (1, 2)"""
        config = small_config(
            horizon=0.0625, steps=32, samples=64, projection=[1, 2], t_values=[0.03125, 0.0625],
            galerkin_modes=3, noise_modes=1, diffusions=[FieldConfig(kind="constant", a=[1.0, 0.0, 0.0])],
        )
        report = run_monte_carlo(config)
        assert report.failures == 0
        assert report.nondegenerate_fraction == 0.0
        assert all(not any(r.nondegenerate_by_time.values()) for r in report.results)

    def test_degenerate_control(self):
        """A single constant noise direction e_1 never reaches coordinate 2"""
        config = small_config(
            galerkin_modes=3, noise_modes=1, projection=[2],
            diffusions=[FieldConfig(kind="constant", a=[1.0, 0.0, 0.0])],
        )
        report = run_monte_carlo(config)
        assert report.failures == 0
        assert report.nondegenerate_fraction == 0.0
        assert all(abs(r.lambda_max) < 1e-12 for r in report.results)
        assert report.hierarchy_ranks["V1"] == 1
        assert report.kde[0].degenerate

    def test_reproducible(self):
        config = small_config(t_values=[0.25, 0.5])
        a = run_monte_carlo(config)
        b = run_monte_carlo(config)
        assert a.content_hash() == b.content_hash()
        assert a.results[0].spawn_key == [0, 0]
        assert run_monte_carlo(small_config(seed=5)).content_hash() != a.content_hash()

    def test_worker_count_does_not_change_results(self):
        config = small_config()
        serial = run_monte_carlo(config, workers=1)
        parallel = run_monte_carlo(config, workers=2, backend="threading")
        assert serial.content_hash() == parallel.content_hash()

    def test_process_backend_matches_serial(self):
        config = small_config(samples=2)
        serial = run_monte_carlo(config, workers=1)
        processes = run_monte_carlo(config, workers=2)
        assert serial.content_hash() == processes.content_hash()

    def test_any_exception_in_a_sample_is_isolated(self, monkeypatch):
        original = density_lab.solve_sample

        def flaky(ctx, index):
            if index == 1:
                raise ValueError("singular operator in one sample")
            return original(ctx, index)

        monkeypatch.setattr(density_lab, "solve_sample", flaky)
        report = run_monte_carlo(small_config(samples=10))
        assert report.failures == 1
        assert report.results[1].failed
        assert report.results[1].error == "ValueError: singular operator in one sample"
        assert report.nondegenerate_fraction == 1.0
        assert [r.index for r in report.results] == list(range(10))

    def test_failed_samples_are_isolated(self):
        Q = np.zeros((3, 3, 3))
        Q[0, 0, 0] = 1.0
        config = small_config(
            galerkin_modes=3, noise_modes=1, samples=3, x0=[1e3, 0.0, 0.0],
            drift=FieldConfig(kind="quadratic", Q=Q.tolist(), smoothing=0.0),
        )
        ctx = _prepare(config)
        result = _run_sample(ctx, 1)
        assert result.failed
        assert "non-finite" in result.error
        assert result.spawn_key == [0, 1]
        with pytest.raises(NumericalError):
            run_monte_carlo(config)

    def test_hierarchy_ranks_keys(self):
        config = small_config(hierarchy_depth=0)
        ranks = hierarchy_ranks(config, config.build_fields())
        assert ranks == {"V0": 2, "TV0": 1}


if __name__ == "__main__":
    pytest.main([__file__])
