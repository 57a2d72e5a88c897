"""Config files (TOML or JSON) layered under command-line flags.

Sections: ``generator``, ``env``, ``scheduler``, ``shaping``, ``train``,
``bed``.  Keys match the dataclass field names.  Precedence is flag > file >
built-in default.
"""
from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_VAR = "CASANDE_LAB_CONFIG"


class ConfigFileError(ValueError):
    pass


def load_config_file(path=None) -> dict:
    """Parse ``path`` (or the file named by $CASANDE_LAB_CONFIG); empty dict when neither is set."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return {}
    p = Path(path)
    text = p.read_text()
    try:
        if p.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigFileError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigFileError(f"{p}: top level must be a table")
    return data


def build(cls, section: dict | None = None, **overrides):
    """Instantiate dataclass ``cls`` from a config section plus non-None overrides."""
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in (section or {}).items():
        if key not in names:
            raise ConfigFileError(f"unknown key {key!r} for {cls.__name__}")
        kwargs[key] = value
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    return cls(**kwargs)
