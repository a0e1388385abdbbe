"""Experiment configuration: one JSON document, schema-checked, with flag overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import jsonschema

from ..errors import ConfigError

COMMANDS = ("spectrum", "exponents", "lyapunov", "hatano", "verify", "dos")

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": _NUM}


def _section(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _section({
    "command": {"enum": list(COMMANDS)},
    "model": _section({
        "dims": {"type": "array", "items": _POS_INT, "minItems": 1, "maxItems": 3},
        "w": {"type": "number", "minimum": 0},
        "distribution": {"enum": ["uniform", "cauchy"]},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
    }),
    "boundary": _section({
        "xi": _NUM,
        "phi": _NUM,
        "phi_steps": {"type": "integer", "minimum": 0},
        "xi_values": _NUM_LIST,
    }),
    "energy": _section({"re": _NUM, "im": _NUM}),
    "numerics": _section({
        "n_angles": {"type": "integer", "minimum": 8},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "grid_step": {"type": "number", "exclusiveMinimum": 0},
        "xi_max": {"type": ["number", "null"]},
        "refine": {"enum": ["all", "first", "none"]},
        "workers": _POS_INT,
    }),
    "output": _section({
        "dir": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
        "precision": {"type": "integer", "minimum": 1, "maximum": 17},
    }),
    "hatano": _section({
        "w_values": _NUM_LIST,
        "realizations": _POS_INT,
        "bins": _POS_INT,
        "oracle_length": {"type": "integer", "minimum": 0},
        "xi_c_max": {"type": "number", "exclusiveMinimum": 0},
        "xi_c_grid": _POS_INT,
    }),
    "dos": _section({"realizations": _POS_INT, "bins": _POS_INT, "range": {**_NUM_LIST, "minItems": 2, "maxItems": 2}}),
    "verify": _section({"master_seed": _INT, "instances": _POS_INT}),
}, required=("command",))

DEFAULTS = {
    "model": {"dims": [50], "w": 0.0, "distribution": "uniform", "delta": 1.0, "seeds": [0]},
    "boundary": {"xi": 0.0, "phi": 0.0, "phi_steps": 0, "xi_values": []},
    "energy": {"re": 0.0, "im": 0.0},
    "numerics": {"n_angles": 64, "tol": 1e-7, "grid_step": 0.01, "xi_max": None, "refine": "all", "workers": 1},
    "output": {"dir": "out", "format": "csv", "precision": 17},
    "hatano": {"w_values": [], "realizations": 20, "bins": 200, "oracle_length": 0, "xi_c_max": 2.0, "xi_c_grid": 40},
    "dos": {"realizations": 10, "bins": 200},
    "verify": {"master_seed": 20240601, "instances": 60},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def load_config(path: str | os.PathLike | None, command: str, overrides: dict | None = None) -> dict:
    """Read, validate and resolve a configuration for ``command``."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc.setdefault("command", command)
    if doc["command"] != command:
        raise ConfigError(f"config is for {doc['command']!r}, not {command!r}")
    validate(doc)
    resolved = _merge(DEFAULTS, doc)
    if overrides:
        resolved = _merge(resolved, overrides)
    validate(resolved)
    return resolved


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def default_workers() -> int:
    raw = os.environ.get("ANDERSONSPEC_WORKERS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"ANDERSONSPEC_WORKERS={raw!r} is not an integer") from None
    if value < 1:
        raise ConfigError("ANDERSONSPEC_WORKERS must be >= 1")
    return value
