"""Runtime configuration defaults for fitting, simulation and storage."""

from __future__ import annotations

import os

DB_PATH = "data/replicates.db"
LOG_PATH = ""
LOG_LEVEL = "WARNING"
DEFAULT_SEED = 20240611

# Parameter box. RHO_MAX bounds every implied pair correlation.
RHO_MAX = 0.99
BETA_BOUND = 20.0
RHO_BOUND = 10.0
CLUSTER_SIZE_BOUND = 50

# Fitting defaults.
TOL_PARAMS = 1e-6
TOL_LOGLIK = 1e-8
MAX_OUTER_ITERS = 500
MAX_NEWTON_ITERS = 50
MAX_INNER_SWEEPS = 100
NEWTON_TOL = 1e-9
INIT_RHO = 0.1
RHO_XATOL = 1e-8
RHO_BOUNDARY_EPS = 1e-4

# Numerical tolerances.
PSD_TOLERANCE = 1e-10
HESSIAN_REL_STEP = 1e-5
SINGULAR_CONDITION = 1e12
CI_Z = 1.959963984540054

# Simulation run health.
MAX_NONCONVERGED_FRACTION = 0.05

_SEED_ENV = "POFRAILTY_SEED"
_DB_PATH_ENV = "POFRAILTY_DB_PATH"
_LOG_PATH_ENV = "POFRAILTY_LOG_PATH"
_LOG_LEVEL_ENV = "POFRAILTY_LOG_LEVEL"


def _env(name: str) -> str:
    return os.environ.get(name, "").strip()


def default_seed() -> int:
    """
    Resolve the default seed.

    Resolution order:
    1. POFRAILTY_SEED (if set and an integer)
    2. DEFAULT_SEED
    """
    raw = _env(_SEED_ENV)
    if not raw:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{_SEED_ENV} must be an integer, got {raw!r}") from None


def resolve_db_path() -> str:
    """Replicate store path, honouring POFRAILTY_DB_PATH."""
    return _env(_DB_PATH_ENV) or DB_PATH


def resolve_log_path() -> str:
    """Debug log file path; empty string disables the file handler."""
    return _env(_LOG_PATH_ENV) or LOG_PATH


def resolve_log_level() -> str:
    return (_env(_LOG_LEVEL_ENV) or LOG_LEVEL).upper()
