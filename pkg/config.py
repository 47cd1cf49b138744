#!/usr/bin/env python3
"""
Runtime Settings
================

Environment-driven settings for the scaling tool. Values come from the process
environment or a local ``.env`` file. Model parameters are NOT configured here:
they live in the shipped network, device and scenario files.

Environment keys:
- DNN_SCALING_DATA_DIR: directory holding networks/, devices/ and scenarios/
- DNN_SCALING_OUTPUT_DIR: default output directory for reports
- DNN_SCALING_LOG_LEVEL: logging level name (INFO, DEBUG, ...)
- DNN_SCALING_MAX_WORKERS: thread pool size for row evaluation and toy workers
"""

import logging
import os
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from errors import ConfigError

logger = logging.getLogger(__name__)

REPO_DIR = Path(__file__).resolve().parent
VALID_LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")


@dataclass(frozen=True)
class Settings:
    """Resolved runtime settings"""
    data_dir: Path
    output_dir: Path
    log_level: str
    max_workers: int

    @property
    def networks_dir(self) -> Path:
        return self.data_dir / "networks"

    @property
    def devices_dir(self) -> Path:
        return self.data_dir / "devices"

    @property
    def scenarios_dir(self) -> Path:
        return self.data_dir / "scenarios"

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['data_dir'] = str(self.data_dir)
        data['output_dir'] = str(self.output_dir)
        return data


def _int_env(key: str, default: int) -> int:
    raw = os.getenv(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{key} must be >= 1, got {value}")
    return value


def load_settings(env_file: Optional[str] = None) -> Settings:
    """Load settings from the environment (and an optional .env file)"""
    load_dotenv(env_file)

    log_level = os.getenv('DNN_SCALING_LOG_LEVEL', 'INFO').upper()
    if log_level not in VALID_LOG_LEVELS:
        raise ConfigError(f"DNN_SCALING_LOG_LEVEL must be one of {VALID_LOG_LEVELS}, got {log_level!r}")

    data_dir = Path(os.getenv('DNN_SCALING_DATA_DIR', str(REPO_DIR)))
    if not data_dir.is_dir():
        raise ConfigError(f"DNN_SCALING_DATA_DIR does not exist: {data_dir}")

    settings = Settings(
        data_dir=data_dir,
        output_dir=Path(os.getenv('DNN_SCALING_OUTPUT_DIR', 'results')),
        log_level=log_level,
        max_workers=_int_env('DNN_SCALING_MAX_WORKERS', 4),
    )
    logger.debug(f"Settings loaded: {settings.to_dict()}")
    return settings


__all__ = ['Settings', 'load_settings', 'REPO_DIR', 'VALID_LOG_LEVELS']
