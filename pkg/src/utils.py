import logging
import logging.config
import math
import os

from dotenv import load_dotenv
from mmh3 import hash as mmh3_hash

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_configured = False


def get_log_level() -> str:
    return os.getenv("KG_AUDIT_LOG_LEVEL", "INFO").upper()


def get_logger(name: str) -> logging.Logger:
    """get logger instance, configuring the logging tree on first use

    Args:
        name (str): usually the module __name__

    Returns:
        logging.Logger: logger instance
    """
    global _configured
    if not _configured:
        logging.config.dictConfig(
            {
                "version": 1,
                "disable_existing_loggers": False,
                "formatters": {"default": {"format": LOG_FORMAT}},
                "handlers": {
                    "console": {
                        "class": "logging.StreamHandler",
                        "formatter": "default",
                        "stream": "ext://sys.stderr",
                    }
                },
                "root": {"handlers": ["console"], "level": get_log_level()},
            }
        )
        _configured = True
    return logging.getLogger(name)


def progress_disabled() -> bool:
    # tqdm bars only when INFO messages would be shown as well
    return logging.getLogger().getEffectiveLevel() > logging.INFO


def derive_seed(master_seed: int, stage: str) -> int:
    """Stage seed = MurmurHash3 of "<master>:<stage>" seeded with the low 32 bits
    of the master seed. Unsigned 32-bit result, usable by numpy.random.default_rng.
    """
    return mmh3_hash(f"{master_seed}:{stage}", seed=master_seed & 0xFFFFFFFF, signed=False)


def round_sig(value: float, digits: int = 6) -> float:
    """Round to `digits` significant digits; used for every emitted float."""
    if not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def env_int(name: str, default: int | None = None) -> int | None:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    return int(raw)


def env_str(name: str, default: str | None = None) -> str | None:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    return raw.strip()
