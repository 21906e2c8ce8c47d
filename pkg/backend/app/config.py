# backend/app/config.py
import logging
import os
from logging.config import fileConfig

from dotenv import load_dotenv

load_dotenv()


def _env_int(name: str, default: int) -> int:
    """
    Read an integer env var. Empty or malformed values fall back to the default
    instead of failing at import time.
    """
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return default


# Worker count for replications and permutation batches. Never changes results.
THREADS = max(1, _env_int("QDRT_THREADS", os.cpu_count() or 1))

DEFAULT_SEED = _env_int("QDRT_SEED", 2023)
N_PERMUTATIONS = _env_int("QDRT_PERMUTATIONS", 9999)
DEFAULT_REPLICATIONS = _env_int("QDRT_REPLICATIONS", 1000)
DATASET_COUNT = _env_int("QDRT_DATASET_COUNT", 10000)

OUT_DIR = os.getenv("QDRT_OUT_DIR", "results")
LOG_CONFIG = os.getenv("QDRT_LOG_CONFIG", "logging.ini")
LOG_LEVEL = os.getenv("QDRT_LOG_LEVEL")

ALPHA = float(os.getenv("QDRT_ALPHA", "0.01"))

TOOL_VERSION = "1.0.0"

LOG_FORMAT = "%(asctime)s %(levelname)-5.5s [%(name)s] %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Load the ini logging config; fall back to basicConfig with the same format."""
    path = LOG_CONFIG
    if os.path.exists(path):
        fileConfig(path, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    level = level or LOG_LEVEL
    if level:
        logging.getLogger("app").setLevel(level.upper())
