"""
Configuration management for ctxaware.

Loads/saves TOML configuration for presence detection, triggers, feedback patterns,
the simulator, the local store, the broker and logging.
"""

import logging
import os
from pathlib import Path

from pydantic import BaseModel, Field

try:
    import tomllib
except ImportError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

DATA_DIR_ENV = "CTXAWARE_DATA_DIR"


class PresenceConfig(BaseModel):
    """Radio scan cadence and exit hysteresis."""

    scan_period_s: float = Field(default=30.0, gt=0, description="Seconds between radio scans")
    exit_misses: int = Field(
        default=2, ge=1, description="Consecutive missed scans before a device is declared gone"
    )
    notify_unknown: bool = Field(
        default=False, description="Raise PersonNearby for devices without a contact association"
    )

    @property
    def scan_period_ms(self) -> int:
        return int(round(self.scan_period_s * 1000))


class TriggerConfig(BaseModel):
    """Trigger evaluation parameters."""

    geofence_radius_m: float = Field(
        default=100.0, gt=0, description="Outdoor geofence radius (worst-case GPS error)"
    )


class FeedbackConfig(BaseModel):
    """Vibration pattern durations in milliseconds."""

    person_ms: int = Field(default=500, gt=0, description="Person nearby vibration")
    audio_ms: int = Field(default=250, gt=0, description="Audio note vibration")
    text_lead_ms: int = Field(default=50, gt=0, description="Text note leading pulse")
    text_pause_ms: int = Field(default=100, gt=0, description="Text note pause between pulses")
    text_tail_ms: int = Field(default=250, gt=0, description="Text note trailing pulse")


class SimConfig(BaseModel):
    """Simulated world parameters."""

    radio_range_m: float = Field(default=10.0, gt=0, description="Radio visibility range")
    gps_jitter_m: float = Field(default=0.0, ge=0, description="Uniform GPS jitter bound")
    seed: int = Field(default=1, description="Seed for every random draw in the world")


class StoreConfig(BaseModel):
    """Local store location."""

    data_dir: str = Field(
        default="~/.local/share/ctxaware", description="Directory holding the device database"
    )


class BrokerConfig(BaseModel):
    """Broker endpoint and client retry policy."""

    listen: str = Field(default="127.0.0.1:7878", description="host:port of the broker service")
    snapshot: str | None = Field(default=None, description="Broker snapshot file")
    timeout_ms: int = Field(default=2000, gt=0, description="Reply timeout in milliseconds")
    retries: int = Field(default=2, ge=0, description="Retry count on CRC/timeout errors")


class LoggingConfig(BaseModel):
    """Logging configuration."""

    level: str = Field(default="INFO", description="Log level (DEBUG, INFO, WARNING, ERROR)")
    log_dir: str | None = Field(default=None, description="Directory for log files")


class Config(BaseModel):
    """Complete ctxaware configuration."""

    presence: PresenceConfig = Field(default_factory=PresenceConfig)
    triggers: TriggerConfig = Field(default_factory=TriggerConfig)
    feedback: FeedbackConfig = Field(default_factory=FeedbackConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    store: StoreConfig = Field(default_factory=StoreConfig)
    broker: BrokerConfig = Field(default_factory=BrokerConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)


def get_config_path() -> Path:
    """Get default configuration file path."""
    config_home = os.getenv("XDG_CONFIG_HOME", os.path.expanduser("~/.config"))
    return Path(config_home) / "ctxaware" / "config.toml"


def load_config(path: Path | None = None) -> Config:
    """
    Load configuration from TOML file.

    Args:
        path: Configuration file path. If None, uses default location.

    Returns:
        Loaded configuration object (defaults if the file does not exist).
    """
    if path is None:
        path = get_config_path()

    if not path.exists():
        return Config()

    with open(path, "rb") as f:
        data = tomllib.load(f)

    return Config(**data)


def save_config(config: Config, path: Path | None = None) -> None:
    """
    Save configuration to TOML file.

    Args:
        config: Configuration object to save.
        path: Configuration file path. If None, uses default location.
    """
    if path is None:
        path = get_config_path()

    path.parent.mkdir(parents=True, exist_ok=True)

    import tomli_w

    with open(path, "wb") as f:
        tomli_w.dump(config.model_dump(exclude_none=True), f)


def resolve_data_dir(config: Config, override: str | None = None) -> Path:
    """
    Resolve the device data directory.

    Precedence: explicit override, then $CTXAWARE_DATA_DIR, then the config file.
    """
    raw = override or os.getenv(DATA_DIR_ENV) or config.store.data_dir
    return Path(os.path.expanduser(raw))


def setup_logging(config: LoggingConfig) -> None:
    """Configure root logging for command-line tools (rich console + optional file)."""
    from rich.logging import RichHandler

    handlers: list[logging.Handler] = [RichHandler(show_path=False, rich_tracebacks=False)]
    if config.log_dir:
        log_dir = Path(os.path.expanduser(config.log_dir))
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "ctxaware.log")
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        handlers.append(file_handler)

    logging.basicConfig(
        level=getattr(logging, config.level.upper(), logging.INFO),
        format="%(message)s",
        handlers=handlers,
        force=True,
    )
