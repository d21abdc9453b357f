#!/usr/bin/env python3
"""
Main entry point for the SPDE density lab.

    python main.py montecarlo --config config/default.cfg --seed 7 --output results/run1
"""

import os
import sys
import logging
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config.settings import LOG_FORMAT, LOG_LEVEL, RESULTS_DIR

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format=LOG_FORMAT,
    handlers=[
        logging.StreamHandler(sys.stdout),
        logging.FileHandler('logs/app.log', mode='a') if os.path.exists('logs') else logging.NullHandler()
    ]
)

logger = logging.getLogger(__name__)


def setup_environment():
    """Create the default output directory."""
    Path(RESULTS_DIR).mkdir(parents=True, exist_ok=True)


def main():
    setup_environment()
    from src.cli_runner import main as run_cli
    code = run_cli(sys.argv[1:])
    if code:
        logger.error(f"❌ Finished with exit code {code}")
    sys.exit(code)


if __name__ == "__main__":
    main()
