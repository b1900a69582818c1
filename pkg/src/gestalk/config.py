"""Layered runtime settings for the command line tool.

Precedence, lowest to highest: built-in defaults, a flat ``key = value``
config file, ``GESTALK_<KEY>`` environment variables, then explicit command
line flags. Unknown keys fail fast so typos never silently fall back to a
default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

ENV_PREFIX = "GESTALK_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class Settings:
    """Every tunable knob, with offline-friendly defaults."""

    threshold: float = 0.2
    inclusive_threshold: bool = False
    slack_ms: int = 500
    parallel: int = 1
    labels: str = ""
    prompts_dir: str = ""
    asr_base_url: str = ""
    asr_model: str = "whisper-1"
    asr_api_key: str = ""
    chat_base_url: str = ""
    gesture_model: str = ""
    rewrite_model: str = ""
    chat_api_key: str = ""
    asr_fixture: str = ""
    gesture_fixture: str = ""
    connect_timeout_s: float = 10.0
    read_timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_s: float = 0.5
    max_parallel_requests: int = 4

    def __post_init__(self) -> None:
        if self.slack_ms < 0:
            raise ConfigError("slack_ms must be non-negative")
        if self.parallel < 1:
            raise ConfigError("parallel must be at least 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be at least 1")
        if self.max_parallel_requests < 1:
            raise ConfigError("max_parallel_requests must be at least 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold {self.threshold!r} outside [0, 1]")

    def label_list(self) -> list[str]:
        return [part.strip() for part in self.labels.split(",") if part.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(Settings)}


def _coerce(key: str, raw: str) -> object:
    kind = _FIELD_TYPES[key]
    try:
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Read a flat ``key = value`` file; # starts a comment line."""
    values: dict[str, object] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, object]:
    """Collect GESTALK_* variables that name a known setting."""
    if environ is None:
        environ = os.environ
    values: dict[str, object] = {}
    for key in _FIELD_TYPES:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _coerce(key, raw)
    return values


def load_settings(
    config_path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
) -> Settings:
    """Merge all layers into a validated Settings value."""
    settings = Settings()
    if config_path is not None:
        if not Path(config_path).is_file():
            raise ConfigError(f"config file not found: {config_path}")
        settings = replace(settings, **parse_config_file(config_path))
    env = env_overrides(environ)
    if env:
        settings = replace(settings, **env)
    if overrides:
        unknown = set(overrides) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown settings {sorted(unknown)}")
        settings = replace(settings, **dict(overrides))
    return settings
