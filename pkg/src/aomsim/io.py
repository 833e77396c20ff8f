"""CSV/JSON helpers shared by all result writers.

Every CSV starts with one ``# config: {...}`` line carrying the resolved run
configuration, followed by a plain header row and full-precision data rows.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CONFIG_PREFIX = "# config: "


class FormatError(ValueError):
    """Malformed result file; message names the first offending row/column."""


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, columns: dict, config: dict | None = None) -> Path:
    """Write equal-length ``columns`` to ``path``; floats round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    lengths = {len(columns[n]) for n in names}
    if len(lengths) > 1:
        raise ValueError(f"column lengths differ: { {n: len(columns[n]) for n in names} }")
    n_rows = lengths.pop() if lengths else 0
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write(CONFIG_PREFIX + json.dumps(config, sort_keys=True, default=_json_default) + "\n")
        fh.write(",".join(names) + "\n")
        for i in range(n_rows):
            fh.write(",".join(_fmt(columns[n][i]) for n in names) + "\n")
    return path


def read_csv(path, types: dict | None = None) -> tuple[dict | None, dict]:
    """Read a file written by :func:`write_csv`.

    ``types`` maps column name to a converter (default float).  Returns the
    embedded config (or None) and a dict of numpy arrays / lists.
    """
    path = Path(path)
    types = types or {}
    config = None
    with path.open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith(CONFIG_PREFIX):
            config = json.loads(line[len(CONFIG_PREFIX):])
        elif line.startswith("#") or not line.strip():
            continue
        else:
            body.append(line)
    if not body:
        raise FormatError(f"{path}: missing header row")
    names = body[0].split(",")
    cols = {n: [] for n in names}
    for r, line in enumerate(body[1:], start=1):
        cells = line.split(",")
        if len(cells) != len(names):
            raise FormatError(f"{path}: data row {r} has {len(cells)} fields, expected {len(names)}")
        for c, (name, cell) in enumerate(zip(names, cells)):
            conv = types.get(name, float)
            try:
                cols[name].append(conv(cell))
            except ValueError as exc:
                raise FormatError(f"{path}: data row {r}, column {c + 1} ({name}): cannot parse {cell!r}") from exc
    out = {}
    for name, vals in cols.items():
        conv = types.get(name, float)
        out[name] = vals if conv is str else np.asarray(vals)
    return config, out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path
