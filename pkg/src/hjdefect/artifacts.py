"""CSV and JSON emission with stable formatting.

CSV: comma separated, one header row, ``%.12g`` numbers.  JSON: UTF-8, sorted
keys; wall-clock data lives under a ``timing`` key so that two runs can be
compared after dropping it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

TIMING_KEY = "timing"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def to_jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def strip_timing(obj):
    """Drop every ``timing`` entry (recursively) for reproducibility comparisons."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k != TIMING_KEY}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def write_field(path, field) -> tuple[Path, Path]:
    """A grid field as CSV of coordinates and value, plus a JSON metadata sidecar."""
    path = Path(path)
    d = field.dim
    header = ["x"] if d == 1 else [f"x{i + 1}" for i in range(d)]
    rows = np.column_stack([field.coords, field.values])
    csv_path = write_csv(path.with_suffix(".csv"), header + ["value"], rows)
    meta = dict(field.meta)
    meta.setdefault("geometry", field.geometry)
    meta.setdefault("h", field.h)
    meta.setdefault("dim", d)
    json_path = write_json(path.with_suffix(".json"), meta)
    return csv_path, json_path
