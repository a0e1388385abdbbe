"""Result envelopes and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .config import config_hash


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(list(values))


@dataclass
class ResultEnvelope:
    command: str
    tables: dict[str, Table]
    provenance: dict
    diagnostics: dict = field(default_factory=dict)


def provenance(config: dict) -> dict:
    return {
        "config_sha256": config_hash(config),
        "seeds": list(config["model"]["seeds"]),
        "version": __version__,
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _plain(value):
    """Convert numpy scalars to Python values for JSON and CSV."""
    if isinstance(value, np.generic):
        return value.item()
    return value


def format_cell(value, precision: int) -> str:
    value = _plain(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.{precision}g}"
    return str(value)


def write_csv(path: Path, table: Table, precision: int = 17) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_cell(v, precision) for v in row])


def read_csv(path: Path) -> Table:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        return Table(columns, [row for row in reader])


def _json_default(value):
    value = _plain(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, (int, float, str, bool)) or value is None:
        return value
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _json_cell(value):
    value = _plain(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def envelope_dict(env: ResultEnvelope, files: dict | None = None) -> dict:
    out = {"command": env.command, "provenance": env.provenance, "diagnostics": env.diagnostics}
    if files is None:
        out["payload"] = {
            name: {"columns": t.columns, "rows": [[_json_cell(v) for v in row] for row in t.rows]}
            for name, t in env.tables.items()
        }
    else:
        out["payload_files"] = files
    return out


def write_outputs(env: ResultEnvelope, config: dict) -> list[Path]:
    """Write tables, the envelope and the resolved config into the output directory."""
    out_dir = Path(config["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    precision = config["output"]["precision"]
    written = []
    resolved = out_dir / f"{env.command}_config.json"
    resolved.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(resolved)
    files = None
    if config["output"]["format"] == "csv":
        files = {}
        for name, table in env.tables.items():
            path = out_dir / f"{env.command}_{name}.csv"
            write_csv(path, table, precision)
            files[name] = path.name
            written.append(path)
    env_path = out_dir / f"{env.command}.json"
    env_path.write_text(json.dumps(envelope_dict(env, files), indent=2, default=_json_default) + "\n",
                        encoding="utf-8")
    written.append(env_path)
    return written
