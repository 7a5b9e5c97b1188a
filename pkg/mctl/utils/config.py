"""Configuration loading for the server and the simulator."""

import os
import sys
from typing import Any, Dict, Optional, Type, TypeVar

from dagster import Config, get_dagster_logger
from pydantic import Field, ValidationError

from mctl.processors.trilateration import SolverConfig
from mctl.utils.errors import ConfigError
from mctl.utils.models import SKELETONS


if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


logger = get_dagster_logger()

CONFIG_ENV_VAR = "MCTL_CONFIG"
SOLVER_MODES = ("nonlinear", "linear")

C = TypeVar("C", bound=Config)


class ServerConfig(Config):
    """Configuration for the fusion server."""

    listen_host: str = "127.0.0.1"
    listen_port: int = 7600
    fps: float = 30.0
    skeleton: str = "default"
    c_threshold: float = 1e-4
    max_iterations: int = 100
    singular_det_epsilon: float = 1e-12
    window_ms: Optional[float] = Field(
        default=None, description="Frame window override; defaults to 1000/fps"
    )
    sync_period_ms: float = 1000.0
    sync_history: int = 5
    occlusion_compensation: bool = True
    solver: str = "nonlinear"
    wand_radius_cm: float = 5.0
    c_offset: float = 0.5025
    calibration_samples: int = 5
    max_dev_cm: float = 5.0
    calibration_file: Optional[str] = None
    output_dir: str = "mctl-out"

    @property
    def frame_window_ms(self) -> float:
        return self.window_ms if self.window_ms is not None else 1000.0 / self.fps

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            c_threshold=self.c_threshold,
            max_iterations=self.max_iterations,
            singular_det_epsilon=self.singular_det_epsilon,
        )


def read_toml(path: str) -> Dict[str, Any]:
    """Read a TOML file into a dictionary."""
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"error parsing {path}: {e}")


def build_config(config_cls: Type[C], values: Dict[str, Any], source: str = "config") -> C:
    """Instantiate a Config class, rejecting unknown keys."""
    unknown = sorted(set(values) - set(config_cls.model_fields))
    if unknown:
        raise ConfigError(f"unknown keys in {source}: {', '.join(unknown)}")
    try:
        return config_cls(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid {source}: {e}")


def validate_server_config(config: ServerConfig) -> ServerConfig:
    if config.fps <= 0:
        raise ConfigError("fps must be positive")
    if config.solver not in SOLVER_MODES:
        raise ConfigError(f"solver must be one of {SOLVER_MODES}, got {config.solver!r}")
    if config.skeleton not in SKELETONS:
        raise ConfigError(f"unknown skeleton {config.skeleton!r}")
    if config.c_threshold <= 0 or config.max_iterations < 1:
        raise ConfigError("c_threshold must be positive and max_iterations at least 1")
    if not 0 < config.c_offset < 1:
        raise ConfigError("c_offset must lie in (0, 1)")
    if config.window_ms is not None and config.window_ms <= 0:
        raise ConfigError("window_ms must be positive")
    if config.calibration_samples < 3:
        raise ConfigError("calibration_samples must be at least 3")
    return config


def resolve_config_path(path: Optional[str]) -> Optional[str]:
    """Explicit path first, then the MCTL_CONFIG environment variable."""
    return path or os.environ.get(CONFIG_ENV_VAR) or None


def load_server_config(
    path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> ServerConfig:
    """Load the server configuration, applying CLI overrides on top."""
    values: Dict[str, Any] = {}
    resolved = resolve_config_path(path)
    if resolved:
        logger.info(f"Loading server config from {resolved}")
        values.update(read_toml(resolved))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return validate_server_config(build_config(ServerConfig, values, source="server config"))
