"""Environment configuration loading and validation."""

import os
import logging
from dataclasses import dataclass
from pathlib import Path


LOG_LEVELS = frozenset({"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"})

DEFAULT_SEED = 42
DEFAULT_MAX_ROWS = 12000
DEFAULT_FRACTION = 0.2
DEFAULT_SWEEP_SIZES = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)

READ_COMMANDS = frozenset({"attack", "defend", "importance", "aggregate"})


@dataclass(frozen=True)
class Settings:
    """Process-wide settings from environment variables."""

    threads: int
    max_rows: int
    log_level: str

    @classmethod
    def from_env(cls) -> "Settings":
        """Load and validate settings from environment. Raises ValueError on failure."""
        threads = _optional_positive_int("VOLTSPY_THREADS")
        if threads is None:
            threads = max(1, os.cpu_count() or 1)
        max_rows = _optional_positive_int("VOLTSPY_MAX_ROWS") or DEFAULT_MAX_ROWS
        log_level = _log_level(os.environ.get("LOG_LEVEL", "INFO"))
        return cls(threads=threads, max_rows=max_rows, log_level=log_level)


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation: command plus every knob that reaches the pipelines."""

    command: str
    data_dir: Path | None = None
    out_dir: Path | None = None
    objectives: tuple[str, ...] = ()
    kinds: tuple[str, ...] = ("dt", "knn", "mlp", "rf")
    seed: int = DEFAULT_SEED
    balance: bool = False
    fraction: float = DEFAULT_FRACTION
    sizes: tuple[int, ...] = DEFAULT_SWEEP_SIZES
    scale: str = "desk"
    repeats: int = 5
    window: int = 10

    def __post_init__(self) -> None:
        if self.command in READ_COMMANDS:
            if self.data_dir is None or not self.data_dir.is_dir():
                raise ValueError(f"Data directory does not exist: {self.data_dir}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"--fraction must be in (0, 1], got: {self.fraction!r}")
        if any(size < 1 for size in self.sizes):
            raise ValueError(f"--sizes must be positive integers, got: {self.sizes!r}")
        if self.window < 1:
            raise ValueError(f"--window must be >= 1, got: {self.window!r}")
        if self.repeats < 1:
            raise ValueError(f"--repeats must be >= 1, got: {self.repeats!r}")


def parse_int_list(raw: str, name: str) -> tuple[int, ...]:
    """Parse "10,20,30" into a tuple of ints. Raises ValueError naming the flag."""
    values: list[int] = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(int(part))
        except ValueError:
            raise ValueError(
                f"{name} must be comma-separated integers, got: {part!r}"
            )
    if not values:
        raise ValueError(f"{name} must not be empty")
    return tuple(values)


def _optional_positive_int(name: str) -> int | None:
    raw = os.environ.get(name, "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got: {raw!r}")
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got: {raw!r}")
    return value


def _log_level(raw: str) -> str:
    value = (raw or "INFO").strip().upper()
    if value not in LOG_LEVELS:
        raise ValueError(
            f"LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got: {raw!r}"
        )
    return value


def get_log_level_int() -> int:
    """Return the logging module constant for the configured level."""
    level_name = os.environ.get("LOG_LEVEL", "INFO").strip().upper()
    if level_name not in LOG_LEVELS:
        level_name = "INFO"
    return getattr(logging, level_name)
