import os
from typing import Optional

from dotenv import load_dotenv

from opeval.models.errors import ConfigError

load_dotenv()

EVAL_SETTINGS = {
    "prior": 1.0,  # p(y=1), see the prior sweep before changing
    "gamma": 1.0,
    "opc_weighting": "transition",
    "softopc_weighting": "episode",
    "td_error_weighting": "transition",
    "sum_advantages_weighting": "episode",
    "mcc_error_weighting": "episode",
    "sum_advantages_start": "all",
    "n_qfunctions": 1000,
    "n_validation_episodes": 1000,
    "tree_depth": 6,
    "float_digits": 17,
    "max_augmented_states": 100_000,
    "max_threads": 8,
    "log_level": "INFO",
}


def get_thread_count(override: Optional[int] = None) -> int:
    """Worker count for per-Q-function evaluation (OPEVAL_THREADS caps it)"""
    if override is not None:
        return max(1, int(override))

    raw = os.getenv("OPEVAL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError([f"OPEVAL_THREADS must be an integer, got {raw!r}"])

    return max(1, min(EVAL_SETTINGS["max_threads"], os.cpu_count() or 1))
