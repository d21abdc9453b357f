#!/usr/bin/env python3
"""
Environment check for the SPDE density lab.
Verifies the numeric stack, the default experiment file and a small end-to-end solve.
"""

import importlib
import os
import sys
from typing import Optional

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

REQUIRED_PACKAGES = ["numpy", "scipy", "pandas", "pydantic", "joblib", "tqdm", "rich", "dotenv"]


def check_packages() -> bool:
    """Checks that every required package can be imported."""
    ok = True
    for name in REQUIRED_PACKAGES:
        try:
            module = importlib.import_module(name)
            print(f"✅ {name} {getattr(module, '__version__', '')}")
        except ImportError as e:
            print(f"❌ {name} missing: {e}")
            ok = False
    return ok


def check_default_config() -> Optional[object]:
    """Parses config/default.cfg and resolves its exponent profile."""
    from config.settings import DEFAULT_CONFIG_PATH
    from src.cli_runner import build_config, read_config_file
    from src.errors import SimulationError

    if not os.path.exists(DEFAULT_CONFIG_PATH):
        print(f"⚠️ No default experiment file at {DEFAULT_CONFIG_PATH}")
        return None
    try:
        config = build_config(read_config_file(DEFAULT_CONFIG_PATH))
        profile = config.profile()
    except SimulationError as e:
        print(f"❌ Default experiment is invalid: {e}")
        return None
    print(f"✅ Default experiment: H={config.hurst}, kappa={config.kappa}, "
          f"eta={profile.eta:.4g}, gamma_tilde={profile.gamma_tilde:.4g}")
    return config


def check_small_run(config) -> bool:
    """Solves one short sample and checks the flow identities."""
    from src.density_lab import _prepare, solve_sample
    from src.errors import SimulationError

    small = config.model_copy(update={"steps": 32, "t_values": None})
    try:
        _, flows = solve_sample(_prepare(small), 0)
    except SimulationError as e:
        print(f"❌ Small run failed: {e}")
        return False
    residual = flows.product_residual()
    print(f"{'✅' if residual < 1e-8 else '⚠️'} Small run: max |P R - Id| = {residual:.2e}")
    return residual < 1e-8


def main():
    print("🔍 Checking the SPDE density lab environment")
    print("=" * 50)
    packages_ok = check_packages()
    if not packages_ok:
        print("\n📥 Install the requirements with: pip install -r requirements.txt")
        sys.exit(1)
    config = check_default_config()
    run_ok = check_small_run(config) if config is not None else False
    print("\n" + "=" * 50)
    print(f"Packages: {'✅' if packages_ok else '❌'}")
    print(f"Default experiment: {'✅' if config is not None else '❌'}")
    print(f"Small run: {'✅' if run_ok else '❌'}")
    sys.exit(0 if run_ok else 1)


if __name__ == "__main__":
    main()
