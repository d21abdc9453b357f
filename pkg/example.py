"""
Usage example for the SPDE density lab.
Walks through sampling, solving, the flows, the Malliavin matrix and the bracket ranks
on a small truncation.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))


def example_sampling():
    """Sample a Q-FBM path and report its weighted Holder norm."""
    print("🎲 Sampling fractional noise")
    print("-" * 40)

    from src.fbm_gaussian import TimeGrid, TraceClassSpec, sample_qfbm

    grid = TimeGrid.uniform(0.5, 128)
    spec = TraceClassSpec.power_law(4)
    noise = sample_qfbm(spec, 0.9, grid, seed=0)
    print(f"✅ {spec.M} modes on {grid.steps} steps, beta(T) = {np.round(noise.values[:, -1], 4)}")
    print(f"   weighted norm: {noise.weighted_holder_norm(0.85, 0.1):.4f}")
    return noise


def example_solve(noise):
    """Solve the truncated equation and its flows."""
    print("\n🧮 Solving the mild equation")
    print("-" * 40)

    from src.semigroup_spectral import SpectralSemigroup
    from src.spde_engine import choose_exponents, solve_flows, solve_mild
    from src.vector_fields import VectorFieldSet, coupled_sine_diffusions

    profile = choose_exponents(0.9, 0.3)
    S = SpectralSemigroup.dirichlet_laplacian(8)
    fields = VectorFieldSet(S, coupled_sine_diffusions(S, noise.spec.M, 0.5))
    x0 = 1.0 / np.arange(1, 9)
    solution = solve_mild(x0, fields, noise, profile)
    flows = solve_flows(solution, fields)
    print(f"✅ |X_T| = {np.linalg.norm(solution.states[-1]):.4e}")
    print(f"   max |P R - Id| = {flows.product_residual():.2e}")
    return solution, flows, fields


def example_malliavin(solution, flows, fields):
    """Spectrum of gamma_t for the first coordinate."""
    print("\n📐 Malliavin matrix")
    print("-" * 40)

    from src.malliavin_core import malliavin_matrices

    for t in (0.25, 0.5):
        m = malliavin_matrices(solution, flows, fields, t, [[1.0] + [0.0] * 7])
        print(f"t={t}: lambda_min(C)={m.eig_C[0]:.3e}, gamma={m.gamma[0, 0]:.3e}")


def example_hormander(fields, x0):
    """Ranks of the bracket hierarchy at x0."""
    print("\n🔗 Bracket hierarchy")
    print("-" * 40)

    from src.vector_fields import build_hierarchy, rank_at

    hierarchy = build_hierarchy(fields.diffusions, fields.generator_field, x0, 1)
    for k in range(2):
        print(f"level {k}: {len(hierarchy.fields(k))} fields, rank {rank_at(hierarchy, level=k)}")


def main():
    print("🚀 SPDE density lab example")
    print("=" * 50)
    try:
        noise = example_sampling()
        solution, flows, fields = example_solve(noise)
        example_malliavin(solution, flows, fields)
        example_hormander(fields, solution.x0)
    except Exception as e:
        print(f"❌ Example failed: {e}")
        sys.exit(1)
    print("\n✅ Done. Run `python main.py montecarlo` for the full diagnostics.")


if __name__ == "__main__":
    main()
