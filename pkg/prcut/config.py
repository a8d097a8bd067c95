"""
Configuration settings for the PRCut toolkit.
Every value can be overridden from the environment or a local .env file.
"""
import os

from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, default))


# Paths and logging
RUNS_DIR = os.getenv("PRCUT_RUNS_DIR", "runs")
LOG_LEVEL = os.getenv("PRCUT_LOG_LEVEL", "INFO")

# Training defaults (hyperparameter table; batch size is desk scale)
BETA = _env_float("PRCUT_BETA", 0.8)
GAMMA = _env_float("PRCUT_GAMMA", 100.0)
LEARNING_RATE = _env_float("PRCUT_LR", 1e-4)
WEIGHT_DECAY = _env_float("PRCUT_WEIGHT_DECAY", 1e-7)
KNN_NEIGHBORS = _env_int("PRCUT_KNN_K", 100)
BATCH_SIZE = _env_int("PRCUT_BATCH_SIZE", 256)
TEMPERATURE = _env_float("PRCUT_TAU", 0.5)
STEPS = _env_int("PRCUT_STEPS", 3000)
LOG_EVERY = _env_int("PRCUT_LOG_EVERY", 100)

# Numeric limits
MAX_QUADRATURE_ORDER = _env_int("PRCUT_MAX_QUADRATURE_ORDER", 256)
EXACT_PATH_MAX_M = 512
EXACT_RCUT_MAX_N = _env_int("PRCUT_EXACT_RCUT_MAX_N", 4096)
INCLUSION_EXCLUSION_MAX_M = 12
DENSE_EIGEN_MAX_N = _env_int("PRCUT_DENSE_EIGEN_MAX_N", 5000)
PBAR_FLOOR = 1e-6
KL_LOG_FLOOR = 1e-12
ROW_SUM_TOL = 1e-9

# Early stop (off unless enabled in the run config)
PLATEAU_WINDOW = 200
PLATEAU_REL_TOL = 1e-4

# Dashboard settings
DEFAULT_PAGE_CONFIG = {
    "page_title": "PRCut Run Browser",
    "page_icon": "🧩",
    "layout": "wide",
    "initial_sidebar_state": "expanded",
}
DASHBOARD_PORT = _env_int("PRCUT_DASHBOARD_PORT", 8501)
MAX_SCATTER_POINTS = 5000
MAX_GRAPH_NODES = 300
