"""Flat key/value experiment configuration.

The format is plain text with dotted keys, one ``key = value`` pair per
line; ``#`` starts a comment.  Lists (sweep values) are comma separated.
Errors always carry the offending key path so the CLI can exit with a
useful message.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def load_config(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


class ConfigView:
    """Typed access to a raw key/value mapping with unknown-key detection."""

    def __init__(self, raw: dict[str, str], source: str = "<config>"):
        self.raw = dict(raw)
        self.source = source
        self._seen: set[str] = set()

    def _fetch(self, key: str, default):
        self._seen.add(key)
        if key in self.raw:
            return self.raw[key]
        if default is _REQUIRED:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return default

    def get_str(self, key: str, default=None, choices: tuple[str, ...] | None = None):
        value = self._fetch(key, default)
        if value is default:
            return value
        if choices is not None and value not in choices:
            raise ConfigError(
                f"{self.source}: {key} = {value!r} must be one of {', '.join(choices)}"
            )
        return value

    def get_int(self, key: str, default=None):
        value = self._fetch(key, default)
        if value is default:
            return value
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"{self.source}: {key} = {value!r} is not an integer") from None

    def get_float(self, key: str, default=None):
        value = self._fetch(key, default)
        if value is default:
            return value
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{self.source}: {key} = {value!r} is not a number") from None

    def get_bool(self, key: str, default=None):
        value = self._fetch(key, default)
        if value is default:
            return value
        lowered = str(value).lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{self.source}: {key} = {value!r} is not a boolean")

    def get_list(self, key: str, default=None) -> list[str] | None:
        value = self._fetch(key, default)
        if value is default:
            return value
        items = [item.strip() for item in str(value).split(",") if item.strip()]
        if not items:
            raise ConfigError(f"{self.source}: {key} must be a non-empty list")
        return items

    def reject_unknown(self) -> None:
        unknown = sorted(set(self.raw) - self._seen)
        if unknown:
            raise ConfigError(f"{self.source}: unknown keys: {', '.join(unknown)}")


class _Required:
    pass


_REQUIRED = _Required()
REQUIRED = _REQUIRED
