"""Flat ``key = value`` config files (a TOML subset: one assignment per line)."""
from __future__ import annotations

from pathlib import Path

import tomli


class ConfigError(ValueError):
    """Config parse failure; carries the offending line number when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line


def parse_flat(text: str, source: str = "<config>", allowed=None) -> dict:
    """Parse ``key = value`` lines. ``#`` starts a comment; values use TOML syntax.

    Section headers (``[name]``) are ignored so a single file may be shared
    between tools. Unknown keys raise :class:`ConfigError` when ``allowed`` is
    given.
    """
    out: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", source, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"malformed key {key!r}", source, lineno)
        key = key.replace("-", "_")
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown key {key!r}", source, lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", source, lineno)
        try:
            out[key] = tomli.loads(f"v = {value}")["v"]
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", source, lineno) from None
        lines[key] = lineno
    return out


def load_flat(path, allowed=None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config file not found", str(path))
    return parse_flat(path.read_text(encoding="utf-8"), str(path), allowed)
