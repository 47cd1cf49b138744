#!/usr/bin/env python3
"""
End-to-end tests for the dnn-scaling command line.

Every run writes into a temporary output directory passed with --out.
Runs under pytest or directly: python test_cli.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, main
from errors import NetworkParseError
from file_formats import NetworkDocument, read_document
from perfmodel import load_calibrated_profile, load_device_profile
from report_writer import read_report_csv, read_series
from sgdcore import max_relative_difference

REPO_DIR = Path(__file__).resolve().parent
NETWORKS = REPO_DIR / "networks"
DEVICES = REPO_DIR / "devices"
ALEXNET_SCENARIO = str(REPO_DIR / "scenarios" / "alexnet-k80-fdr.json")


def _run(out: str, *args: str) -> int:
    return main(['--out', out, '--log-level', 'WARNING', *args])


def test_analyze_alexnet():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'analyze', '--network', str(NETWORKS / "alexnet.net")) == EXIT_OK
        summary = read_report_csv(Path(tmp) / "network_summary.csv")
        assert summary['conv_layers'][0] == 5
        assert summary['fc_layers'][0] == 3
        assert summary['batch'][0] == 256
        layers = read_report_csv(Path(tmp) / "layers.csv")
        assert len(layers) == 25
        assert not (Path(tmp) / "layer_times.csv").exists()


def test_analyze_googlenet_with_device():
    with tempfile.TemporaryDirectory() as tmp:
        code = _run(tmp, 'analyze', '--network', str(NETWORKS / "googlenet.net"),
                    '--device', str(DEVICES / "k80.json"))
        assert code == EXIT_OK
        summary = read_report_csv(Path(tmp) / "network_summary.csv")
        assert summary['conv_layers'][0] == 59
        assert summary['fc_layers'][0] == 1
        times = read_report_csv(Path(tmp) / "layer_times.csv")
        assert times['share'].sum() == pytest.approx(1.0)


def test_malformed_network_is_a_config_error():
    with tempfile.TemporaryDirectory() as tmp:
        bad = Path(tmp) / "broken.net"
        bad.write_text('{"name": "broken", "layers": [')
        assert _run(tmp, 'analyze', '--network', str(bad)) == EXIT_CONFIG


def test_non_utf8_network_is_a_config_error():
    with tempfile.TemporaryDirectory() as tmp:
        bad = Path(tmp) / "latin.net"
        bad.write_bytes(b'{"name": "\xff\xfe"}')
        assert _run(tmp, 'analyze', '--network', str(bad)) == EXIT_CONFIG
        with pytest.raises(NetworkParseError) as info:
            read_document(bad, NetworkDocument)
        assert "not UTF-8" in str(info.value)


def test_simulate_writes_reports():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'simulate', '--scenario', ALEXNET_SCENARIO) == EXIT_OK
        out = Path(tmp)
        for name in ("report.csv", "speedup.series", "timeline.series", "amdahl.series"):
            assert (out / name).read_text().startswith("# tool: dnn-scaling"), name

        report = read_report_csv(out / "report.csv")
        assert list(report['n']) == [1, 2, 4, 8, 16, 32, 64, 128, 256]
        crossover = int(report[report['comm_bound']]['n'].iloc[0])
        assert 4 <= crossover <= 16

        speedup = read_series(out / "speedup.series")
        assert set(speedup) == {'speedup', 'linear'}
        assert speedup['linear'][-1] == (256.0, 256.0)
        assert speedup['speedup'][0] == (1.0, 1.0)


def test_simulate_single_node():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'simulate', '--scenario', ALEXNET_SCENARIO, '--n-list', '1') == EXIT_OK
        report = read_report_csv(Path(tmp) / "report.csv")
        assert len(report) == 1
        assert report['speedup'][0] == 1.0


def test_simulate_reduction_factor_moves_crossover():
    def crossover(tmp, *extra):
        assert _run(tmp, 'simulate', '--scenario', ALEXNET_SCENARIO, *extra) == EXIT_OK
        report = read_report_csv(Path(tmp) / "report.csv")
        return int(report[report['comm_bound']]['n'].iloc[0])

    with tempfile.TemporaryDirectory() as tmp:
        base = crossover(tmp)
        reduced = crossover(tmp, '--reduction-factor', '4')
    assert reduced > base


def test_simulate_is_byte_reproducible():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'simulate', '--scenario', ALEXNET_SCENARIO) == EXIT_OK
        first = {name: (Path(tmp) / name).read_bytes() for name in ("report.csv", "speedup.series")}
        assert _run(tmp, 'simulate', '--scenario', ALEXNET_SCENARIO) == EXIT_OK
        for name, content in first.items():
            assert (Path(tmp) / name).read_bytes() == content


def test_simulate_rejects_non_dividing_node_count():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'simulate', '--scenario', ALEXNET_SCENARIO, '--n-list', '1,3') == EXIT_INVARIANT
        assert not (Path(tmp) / "report.csv").exists()


def test_sweep_writes_large_batch_table():
    with tempfile.TemporaryDirectory() as tmp:
        code = _run(tmp, 'sweep', '--scenario', ALEXNET_SCENARIO, '--factors', '1,2', '--n-list', '1,2,4')
        assert code == EXIT_OK
        frame = read_report_csv(Path(tmp) / "large_batch.csv")
        assert len(frame) == 6
        assert list(frame['global_batch'].unique()) == [256, 512]
        assert "not modeled" in (Path(tmp) / "large_batch.csv").read_text()


def test_calibrate_writes_reloadable_profile():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'calibrate', '--device', str(DEVICES / "k80.json")) == EXIT_OK
        written = Path(tmp) / "k80.calibrated.json"
        document = json.loads(written.read_text())
        assert document['_manifest']['subcommand'] == "calibrate"
        reloaded = load_device_profile(written)
        expected = load_calibrated_profile(DEVICES / "k80.json")
        assert reloaded.anchors == ()
        assert reloaded.effective_flops == pytest.approx(expected.effective_flops, rel=1e-12)


def test_calibrate_with_explicit_anchor():
    with tempfile.TemporaryDirectory() as tmp:
        code = _run(tmp, 'calibrate', '--device', str(DEVICES / "cpu-2680v3.json"), '--anchor', 'alexnet.net:256:2.0')
        assert code == EXIT_OK
        assert (Path(tmp) / "cpu-2680v3.calibrated.json").exists()
        assert _run(tmp, 'calibrate', '--device', str(DEVICES / "k80.json"), '--anchor', 'alexnet.net:256') \
            == EXIT_CONFIG


def test_unknown_subcommand_is_a_config_error():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'forecast') == EXIT_CONFIG
        assert main(['--out', tmp, '--log-level', 'LOUD', 'analyze', '--network', 'x.net']) == EXIT_CONFIG


def _toy_weights(tmp: str, *extra: str) -> np.ndarray:
    assert _run(tmp, 'train-toy', '--seed', '3', *extra) == EXIT_OK
    return read_report_csv(Path(tmp) / "weights.csv")['weight'].to_numpy()


def test_train_toy_workers_agree():
    with tempfile.TemporaryDirectory() as tmp:
        single = _toy_weights(tmp, '--workers', '1')
        metrics = read_report_csv(Path(tmp) / "train_metrics.csv")
        assert metrics['validation_accuracy'][0] >= 0.95
        assert not metrics['diverged'][0]
        parallel = _toy_weights(tmp, '--workers', '4')
    assert len(single) == 82
    assert max_relative_difference(single, parallel) <= 1e-6


def test_train_toy_zero_iterations():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'train-toy', '--iterations', '0', '--sweep', '1') == EXIT_OK
        metrics = read_report_csv(Path(tmp) / "train_metrics.csv")
        assert metrics['iterations'][0] == 0
        assert len(read_report_csv(Path(tmp) / "weights.csv")) == 82


def test_train_toy_sweep():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'train-toy', '--sweep', '1,2,4,8') == EXIT_OK
        sweep = read_report_csv(Path(tmp) / "sweep.csv")
        assert list(sweep['k']) == [1, 2, 4, 8]
        assert list(sweep['global_batch']) == [32, 64, 128, 256]
        assert list(sweep['iterations']) == [400, 200, 100, 50]


def test_train_toy_invalid_workers():
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(tmp, 'train-toy', '--workers', '3') == EXIT_INVARIANT


if __name__ == "__main__":
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_") and callable(fn)]
    print("🧪 dnn-scaling command line tests")
    print("=" * 60)
    for name, fn in tests:
        fn()
        print(f"✅ {name}")
    print(f"\n🎉 {len(tests)} tests passed")
