"""Plain-text key=value config files.

Format: one `key = value` pair per line, `#` starts a comment, blank
lines are ignored. Keys may not repeat. Values keep internal whitespace
but are stripped at both ends.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def parse_kv_text(text: str, origin: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_kv_text(path.read_text(), origin=str(path))
