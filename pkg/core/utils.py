"""
Common utility functions for logging, configuration files, paths and seeds.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .errors import ConfigurationError, ReportIOError

MASK64 = (1 << 64) - 1


def setup_logger(name: str, level: Union[int, str] = logging.INFO,
                 log_file: Optional[str] = None) -> logging.Logger:
    """Set up a logger with console and optional file output."""
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Avoid adding handlers multiple times
    if logger.handlers:
        return logger

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # core.* loggers propagate into this one
    if name == "softflip":
        core_logger = logging.getLogger("core")
        core_logger.setLevel(level)
        for handler in logger.handlers:
            core_logger.addHandler(handler)

    return logger


def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure a directory exists, create if it doesn't."""
    dir_path = Path(path)
    dir_path.mkdir(parents=True, exist_ok=True)
    return dir_path


def load_config(config_path: Union[str, Path]) -> Dict[str, Any]:
    """Load a JSON configuration file; any failure is a ConfigurationError."""
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {config_path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"error parsing config file {config_path}: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {config_path} must hold a JSON object")
    return data


def save_config(config: Dict[str, Any], config_path: Union[str, Path]) -> None:
    """Save a configuration mapping as JSON."""
    path = Path(config_path)
    try:
        if path.parent != Path(''):
            ensure_directory(path.parent)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(config, f, indent=2, sort_keys=True)
            f.write('\n')
    except OSError as e:
        raise ReportIOError(str(path), str(e))


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 mixer; platform independent."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int, salt: int = 0) -> int:
    """seed_i = hash(master_seed, i): independent per-trial seeds."""
    h = splitmix64((master_seed & MASK64) ^ splitmix64(salt))
    return splitmix64(h ^ splitmix64(index & MASK64))


def worker_count(default: Optional[int] = None) -> int:
    """Trial parallelism: available CPUs, capped by SOFTFLIP_WORKERS."""
    available = default if default is not None else (os.cpu_count() or 1)
    raw = os.environ.get("SOFTFLIP_WORKERS")
    if raw:
        try:
            cap = int(raw)
            if cap >= 1:
                return max(1, min(available, cap))
        except ValueError:
            pass
        logging.getLogger(__name__).warning(
            f"Ignoring invalid SOFTFLIP_WORKERS={raw!r}")
    return max(1, available)
