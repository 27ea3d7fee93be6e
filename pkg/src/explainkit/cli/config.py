"""Option resolution: built-in defaults < EXPLAINKIT_SEED < config file < flags."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from ..data import DEFAULT_SEED
from ..errors import DataError

SEED_ENV = "EXPLAINKIT_SEED"


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable = str
    default: Any = None
    help: str = ""
    choices: Optional[tuple] = None

    @property
    def key(self) -> str:
        return self.name.replace("-", "_")


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys may use - or _."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise DataError(f"{path}:{n}: empty key")
        out[key.replace("-", "_")] = value
    return out


def resolve(options, flags: dict, file_values: dict, environ=os.environ) -> dict:
    """Merge option sources; unknown config-file keys are rejected."""
    known = {o.key for o in options} | {"seed"}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(unknown)}")
    resolved = {}
    for opt in list(options) + [Option("seed", int, DEFAULT_SEED)]:
        value = opt.default
        if opt.key == "seed" and environ.get(SEED_ENV):
            value = environ[SEED_ENV]
        if opt.key in file_values:
            value = file_values[opt.key]
        if flags.get(opt.key) is not None:
            value = flags[opt.key]
        if value is not None and isinstance(value, str) and opt.type is not str:
            try:
                value = opt.type(value)
            except ValueError as exc:
                raise DataError(f"bad value for {opt.name}: {value!r}") from exc
        if opt.choices and value is not None and value not in opt.choices:
            raise DataError(f"{opt.name} must be one of {', '.join(opt.choices)}")
        resolved[opt.key] = value
    return resolved
