"""Plain-text ``key = value`` configuration files.

One option per line, ``#`` starts a comment, keys match the CLI flag names
with dashes replaced by underscores. Unknown keys are rejected against a
schema of defaults, and values are coerced to the type of the default.
Formatting then re-parsing a config is the identity.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional


class ConfigError(ValueError):
    """Raised for malformed config text or unknown/ill-typed options."""


def parse_kv_text(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines; blank lines and comments are skipped."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key in {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_kv(values: Dict) -> str:
    """Render options as sorted ``key = value`` lines."""
    lines = []
    for key in sorted(values):
        value = values[key]
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"


def _coerce(key: str, text: str, default) -> object:
    if default is None or isinstance(default, str):
        return text
    if isinstance(default, bool):
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"option {key!r}: expected a boolean, got {text!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(
            f"option {key!r}: expected {type(default).__name__}, got {text!r}") from None
    raise ConfigError(f"option {key!r}: unsupported option type {type(default).__name__}")


def resolve(defaults: Dict, config_path: Optional[str] = None,
            overrides: Optional[Dict] = None) -> Dict:
    """Merge defaults <- config file <- explicit overrides.

    ``overrides`` entries that are None (flag not given) are ignored.
    Keys absent from ``defaults`` are rejected.
    """
    result = dict(defaults)
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        for key, text in parse_kv_text(path.read_text()).items():
            if key not in defaults:
                raise ConfigError(f"unknown option {key!r} in {path}")
            result[key] = _coerce(key, text, defaults[key])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in defaults:
            raise ConfigError(f"unknown option {key!r}")
        result[key] = value
    return result
