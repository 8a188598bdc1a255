"""Plain-text ``key = value`` configuration files and typed run configs.

Format: UTF-8, one ``key = value`` per line, ``#`` starts a comment, blank
lines ignored.  Keys are dotted identifiers; values are parsed by the
consumer according to the field type.
"""

from __future__ import annotations

import dataclasses
import re
import typing
from pathlib import Path

from .errors import ConfigError

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in body.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


def format_kv(values: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in values.items())


def coerce(raw: str, typ, key: str = "?"):
    """Convert a config string to ``typ`` (bool, int, float, str, tuples thereof, Optional)."""
    origin = typing.get_origin(typ)
    args = typing.get_args(typ)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if raw == "" or raw.lower() == "none":
            return None
        return coerce(raw, inner[0], key)
    if origin is tuple:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(coerce(p, args[0], key) for p in parts)
        if len(parts) != len(args):
            raise ConfigError(f"{key}: expected {len(args)} comma-separated values, got {raw!r}")
        return tuple(coerce(p, a, key) for p, a in zip(parts, args))
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    raise ConfigError(f"{key}: unsupported field type {typ!r}")


def build_config(cls, values: dict, source: str = "<config>"):
    """Instantiate dataclass ``cls`` from string or typed values, rejecting unknown keys."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    kw = {}
    for key, value in values.items():
        kw[key] = coerce(value, hints[key], key) if isinstance(value, str) else value
    try:
        cfg = cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    validate = getattr(cfg, "validate", None)
    if validate is not None:
        validate()
    return cfg


def load_config(cls, path, overrides: dict | None = None):
    values: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_kv(text, str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(cls, values, str(path) if path else "<flags>")


def config_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
