import csv
import json
import math

import numpy as np

from hjdefect.artifacts import dumps, strip_timing, write_csv, write_field, write_json
from hjdefect.hj_core import GridField, box_grid


def test_csv_format(tmp_path):
    p = write_csv(tmp_path / "sub" / "t.csv", ["a", "b", "c"], [(1, 0.1, True), (np.int64(2), np.float64(1 / 3), False)])
    rows = list(csv.reader(open(p)))
    assert rows == [["a", "b", "c"], ["1", "0.1", "1"], ["2", "0.333333333333", "0"]]


def test_json_sorted_and_nonfinite(tmp_path):
    p = write_json(tmp_path / "x.json", {"b": np.float64(math.inf), "a": np.arange(3)})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": "inf"}


def test_strip_timing_recursive():
    obj = {"timing": 1, "x": [{"timing": 2, "y": 3}]}
    assert strip_timing(obj) == {"x": [{"y": 3}]}
    assert dumps(strip_timing(obj)) == dumps({"x": [{"y": 3}]})


def test_field_round_trip(tmp_path):
    g = box_grid(1.0, 0.25)
    f = GridField(g, np.linspace(0, 1, len(g.coords)), {"note": "x"})
    csv_path, json_path = write_field(tmp_path / "f", f)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    assert np.allclose(data[:, 0], f.coords[:, 0]) and np.allclose(data[:, 1], f.values)
    meta = json.loads(json_path.read_text())
    assert meta["note"] == "x" and meta["h"] == 0.25 and meta["dim"] == 1
