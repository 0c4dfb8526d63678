"""Deterministic artifact writers.

Every file carries the schema tag and the full config echo: CSV files as
leading ``#`` comment lines, JSON files as ``schema``/``config`` keys, and
field dumps inside their metadata block.

Field dump layout::

    bytes 0-31   ASCII "PCFIELD1 <n>" padded with spaces, ending in "\\n";
                 <n> is the byte length of the metadata block
    next n bytes UTF-8 JSON metadata: d, N, m, epsilon, omega, schema, config
    remainder    m^d little-endian float64 values, row-major (C order)
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Field, TorusSpec

SCHEMA = "planecell/1"
HEADER_BYTES = 32
MAGIC = "PCFIELD1"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return value


def write_csv(path: Path, columns, rows, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA}\n")
        fh.write(f"# config: {_dumps(config)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def write_json(path: Path, payload: dict, config: dict) -> None:
    doc = {"schema": SCHEMA, "config": config, **payload}
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_field(path: Path, field: Field, epsilon: float, omega, config: dict) -> None:
    spec = field.spec
    meta = {
        "schema": SCHEMA,
        "d": spec.d,
        "N": spec.N,
        "m": spec.m,
        "epsilon": float(epsilon),
        "omega": [float(w) for w in omega],
        "config": config,
    }
    meta_bytes = _dumps(meta).encode()
    header = f"{MAGIC} {len(meta_bytes)}".ljust(HEADER_BYTES - 1) + "\n"
    if len(header) != HEADER_BYTES:
        raise ValueError("metadata too large for the fixed header")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(meta_bytes)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path: Path) -> tuple[Field, dict]:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_BYTES).decode("ascii")
        magic, size = header.split()
        if magic != MAGIC:
            raise ValueError(f"not a field dump: {path}")
        meta = json.loads(fh.read(int(size)))
        spec = TorusSpec(meta["d"], meta["N"], meta["m"])
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(spec.shape)
    return Field(spec, values), meta
