# src/settings.py
"""
Environment-driven settings.

Values are read from the process environment, optionally seeded from a `.env`
file in the working directory:

    ICINET_WORKERS     worker threads for dataset generation / evaluation
    ICINET_OUTPUT_DIR  default directory for generated artifacts
"""

import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_OUTPUT_DIR = "data/"


def worker_count() -> int:
    raw = os.getenv("ICINET_WORKERS")
    if raw:
        try:
            value = int(raw)
        except ValueError as e:
            raise ValueError(f"ICINET_WORKERS must be an integer, got {raw!r}") from e
        if value < 1:
            raise ValueError(f"ICINET_WORKERS must be >= 1, got {value}")
        return value
    return min(4, os.cpu_count() or 1)


def output_dir() -> str:
    return os.getenv("ICINET_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)
