# Configuration file for the SPDE density lab
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent.parent
CONFIG_DIR = BASE_DIR / "config"
DEFAULT_CONFIG_PATH = CONFIG_DIR / "default.cfg"
RESULTS_DIR = Path(os.getenv("SPDE_OUTPUT_DIR", str(BASE_DIR / "results")))

# Config schema
CONFIG_SCHEMA_VERSION = 1

# Gaussian space / sampling
CHOLESKY_JITTER = 1e-12  # relative to the mean diagonal of the covariance
CHOLESKY_JITTER_ATTEMPTS = 4
CIRCULANT_MIN_POINTS = 512  # grids with at least this many points may use circulant embedding
PSD_TOLERANCE = 1e-10

# Semigroup
AMPLIFICATION_CAP = 1e12  # max e^{mu_N t} allowed when applying S(-t)

# Sewing / Young integration
SEWING_TOL = 1e-9
SEWING_MAX_DEPTH = 16

# Hormander diagnostics
RANK_THRESHOLD = 1e-8
HIERARCHY_FIELD_CAP = 512

# Monte Carlo
DEFAULT_SAMPLES = 64  # CI size
FULL_SAMPLES = 1024
MC_FAILURE_LIMIT = 0.10
KDE_GRID_POINTS = 256
KDE_BANDWIDTH_FLOOR = 1e-6

# Default experiment
DEFAULT_HURST = 0.9
DEFAULT_KAPPA = 0.3
DEFAULT_HORIZON = 0.5
DEFAULT_STEPS = 256  # horizon / steps = 1/512
DEFAULT_GALERKIN_MODES = 8
DEFAULT_NOISE_MODES = 4
DEFAULT_EIGENVALUE_DECAY = 3.0

# Logging Configuration
LOG_LEVEL = os.getenv("SPDE_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
