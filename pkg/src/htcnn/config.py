"""Plain-text ``key = value`` configuration files.

One assignment per line; ``#`` starts a comment; blank lines are ignored.
Values are parsed as int, float, bool or a comma-separated list of those,
falling back to the raw string.
"""
from __future__ import annotations

from pathlib import Path

from .errors import ConfigFileError


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_keyvalue(text: str, path="<string>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(path, f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigFileError(path, "empty key", lineno)
        if key in out:
            raise ConfigFileError(path, f"duplicate key {key!r}", lineno)
        out[key] = parse_value(value)
    return out


def read_keyvalue(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(path, f"cannot read config: {exc.strerror}") from exc
    return parse_keyvalue(text, path)


def dump_keyvalue(d: dict) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in d.items())
