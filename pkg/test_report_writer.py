#!/usr/bin/env python3
"""
Tests for report files and their manifest headers.

Runs under pytest or directly: python test_report_writer.py
"""

import json
import tempfile
from pathlib import Path

import pandas as pd

from report_writer import ReportWriter, RunManifest, read_report_csv, read_series

MANIFEST = RunManifest(subcommand="simulate", inputs=("scenarios/a.json",), output_dir="out",
                       parameters={'reduction_factor': 1.0, 'n_list': "1,2"})


def test_header_lines():
    lines = MANIFEST.header_lines()
    assert lines[0] == "# tool: dnn-scaling 0.1.0"
    assert lines[1] == "# subcommand: simulate"
    assert lines[3] == "# seed: -"
    # parameters follow in key order
    assert lines[-2:] == ["# n_list: 1,2", "# reduction_factor: 1.0"]


def test_csv_round_trip():
    frame = pd.DataFrame({'n': [1, 2], 'speedup': [1.0, 1.75], 'comm_bound': [False, True]})
    with tempfile.TemporaryDirectory() as tmp:
        writer = ReportWriter(Path(tmp) / "nested", MANIFEST)
        path = writer.write_csv("report.csv", frame)
        assert path.read_text().startswith("# tool: dnn-scaling")
        pd.testing.assert_frame_equal(read_report_csv(path), frame)
        assert writer.written == [path]


def test_series_blocks():
    series = [('speedup', [(1, 1.0), (2, 1.75)]), ('linear', [(1, 1.0), (2, 2.0)])]
    with tempfile.TemporaryDirectory() as tmp:
        path = ReportWriter(Path(tmp), MANIFEST).write_series("speedup.series", series)
        text = path.read_text()
        assert "# speedup\n1 1\n2 1.75\n\n# linear\n" in text
        assert read_series(path) == {'speedup': [(1.0, 1.0), (2.0, 1.75)], 'linear': [(1.0, 1.0), (2.0, 2.0)]}


def test_json_carries_manifest():
    with tempfile.TemporaryDirectory() as tmp:
        path = ReportWriter(Path(tmp), MANIFEST).write_json("profile.json", {'name': "k80"})
        document = json.loads(path.read_text())
    assert document['name'] == "k80"
    assert document['_manifest']['inputs'] == ["scenarios/a.json"]
    assert json.loads(MANIFEST.to_json()) == document['_manifest']


def test_same_manifest_same_bytes():
    frame = pd.DataFrame({'n': [1], 'iteration_s': [0.123456789012]})
    with tempfile.TemporaryDirectory() as tmp:
        first = ReportWriter(Path(tmp) / "a", MANIFEST).write_csv("r.csv", frame).read_bytes()
        second = ReportWriter(Path(tmp) / "b", MANIFEST).write_csv("r.csv", frame).read_bytes()
    assert first == second


if __name__ == "__main__":
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_") and callable(fn)]
    print("🧪 Report writer tests")
    print("=" * 60)
    for name, fn in tests:
        fn()
        print(f"✅ {name}")
    print(f"\n🎉 {len(tests)} tests passed")
