"""Command-line front end."""

from .config import ConfigError, ConfigWarning, RunConfig, parse_config, serialize_config
from .main import main

__all__ = ["ConfigError", "ConfigWarning", "RunConfig", "parse_config", "serialize_config", "main"]
