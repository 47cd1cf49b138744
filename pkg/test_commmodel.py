#!/usr/bin/env python3
"""
Tests for the communication model and the iteration timeline.

Runs under pytest or directly: python test_commmodel.py
"""

import json
from pathlib import Path

import pytest

from commmodel import (
    ClusterSpec,
    CommScheme,
    OverlapMode,
    comm_time,
    crossover_nodes,
    overlap_timeline,
    per_iteration_traffic,
    scan_timelines,
    tree_stages,
)
from errors import ModelInvariantError
from netspec import load_network, parse_network
from perfmodel import iteration_compute_time, load_calibrated_profile

REPO_DIR = Path(__file__).resolve().parent
FDR = ClusterSpec(n=1, link_bandwidth=6.8e9, bandwidth_efficiency=0.5, link_latency=2e-6)


def _k80():
    return load_calibrated_profile(REPO_DIR / "devices" / "k80.json")


def _alexnet():
    return load_network(REPO_DIR / "networks" / "alexnet.net")


def test_tree_stages():
    assert [tree_stages(n) for n in (1, 2, 3, 4, 5, 8, 256)] == [0, 1, 2, 2, 3, 3, 8]


def test_traffic_formulas():
    assert per_iteration_traffic(CommScheme.PARAMETER_SERVER, 1, 250e6) == 0
    assert per_iteration_traffic(CommScheme.PARAMETER_SERVER, 4, 250e6) == 1.5e9
    for n in (2, 4, 8):
        total = per_iteration_traffic(CommScheme.PARAMETER_SERVER, n, 250e6) * 450000
        assert total == 450000 * 250e6 * 2 * (n - 1)
    assert per_iteration_traffic(CommScheme.PARAMETER_SERVER, 2, 250e6) * 450000 == pytest.approx(225e12)
    assert per_iteration_traffic(CommScheme.BINARY_TREE, 4, 250e6) == per_iteration_traffic(
        CommScheme.PARAMETER_SERVER, 4, 250e6)
    assert per_iteration_traffic(CommScheme.RING_ALL_REDUCE, 4, 100.0) == pytest.approx(2 * 3 / 4 * 100.0 * 4)


def test_comm_time_formulas():
    cluster = ClusterSpec(n=1, link_bandwidth=1e9, bandwidth_efficiency=0.5, link_latency=1e-3)
    assert comm_time(CommScheme.PARAMETER_SERVER, 3, 1e9, cluster) == pytest.approx(8.002)
    assert comm_time(CommScheme.BINARY_TREE, 5, 1e9, cluster) == pytest.approx(12.006)
    assert comm_time(CommScheme.RING_ALL_REDUCE, 4, 1e9, cluster) == pytest.approx(3.006)
    for scheme in CommScheme:
        assert comm_time(scheme, 1, 1e9, cluster) == 0.0


def test_comm_time_monotone_in_model_size():
    for scheme in CommScheme:
        assert comm_time(scheme, 8, 2e8, FDR) > comm_time(scheme, 8, 1e8, FDR)


def test_comm_time_monotone_in_node_count():
    counts = range(1, 65)
    for scheme in CommScheme:
        times = [comm_time(scheme, n, 2.4e8, FDR) for n in counts]
        assert all(a <= b for a, b in zip(times, times[1:])), scheme
    # ceil(log2 n) grows from 3 to 4 stages past eight nodes
    assert comm_time(CommScheme.BINARY_TREE, 16, 2.4e8, FDR) > comm_time(CommScheme.BINARY_TREE, 8, 2.4e8, FDR)


def test_cluster_validation():
    with pytest.raises(ModelInvariantError):
        ClusterSpec(n=0)
    with pytest.raises(ModelInvariantError):
        ClusterSpec(n=2, bandwidth_efficiency=1.5)
    with pytest.raises(ModelInvariantError):
        comm_time(CommScheme.BINARY_TREE, 0, 1.0, FDR)


def test_zero_byte_model_never_waits():
    net = parse_network(json.dumps({
        "name": "no-weights",
        "default_batch": 8,
        "default_step": 0.1,
        "iterations_to_convergence": 1,
        "layers": [
            {"name": "data", "kind": "Data", "I": 64},
            {"name": "relu", "kind": "ReLU", "I": 64},
            {"name": "pool", "kind": "Pooling", "I": 64, "O": 16, "k": 2},
        ],
    }))
    device = _k80()
    timeline = overlap_timeline(net, 8, device, FDR.with_nodes(8))
    assert timeline.iteration_time == pytest.approx(iteration_compute_time(net, 8, device))
    assert timeline.idle_fraction == 0.0
    assert not timeline.comm_bound


def test_single_node_has_no_communication():
    timeline = overlap_timeline(_alexnet(), 256, _k80(), FDR)
    assert timeline.comm_s == 0.0
    assert timeline.comm_busy_s == 0.0
    assert timeline.iteration_time == pytest.approx(timeline.compute_s)


def test_timeline_ordering():
    timeline = overlap_timeline(_alexnet(), 32, _k80(), FDR.with_nodes(8))
    assert 0 < timeline.forward_end < timeline.backward_end <= timeline.comm_end
    assert timeline.iteration_time == max(timeline.backward_end, timeline.comm_end)
    assert 0.0 <= timeline.idle_fraction < 1.0
    assert timeline.comm_busy_s <= timeline.iteration_time - timeline.forward_end + 1e-12
    assert timeline.comm_bound == (timeline.comm_end > timeline.backward_end)


def test_whole_model_mode_is_pessimistic():
    net, device, cluster = _alexnet(), _k80(), FDR.with_nodes(4)
    streamed = overlap_timeline(net, 64, device, cluster)
    whole = overlap_timeline(net, 64, device, cluster, mode=OverlapMode.WHOLE_MODEL)
    assert whole.comm_end == pytest.approx(whole.backward_end + whole.comm_s)
    assert whole.iteration_time >= streamed.iteration_time
    assert whole.comm_bound


def test_reduction_factor_shrinks_communication():
    net, device, cluster = _alexnet(), _k80(), FDR.with_nodes(16)
    full = overlap_timeline(net, 16, device, cluster)
    reduced = overlap_timeline(net, 16, device, cluster, reduction_factor=4)
    assert reduced.comm_s == pytest.approx(full.comm_s / 4, rel=0.01)
    assert reduced.iteration_time <= full.iteration_time
    with pytest.raises(ModelInvariantError):
        overlap_timeline(net, 16, device, cluster, reduction_factor=0.5)


def test_infinite_bandwidth_never_crosses_over():
    cluster = ClusterSpec(n=1, link_bandwidth=float('inf'), link_latency=0.0)
    assert crossover_nodes(_alexnet(), 256, _k80(), cluster) is None


def test_alexnet_crossover_in_expected_band():
    n = crossover_nodes(_alexnet(), 256, _k80(), FDR)
    assert n is not None
    assert 4 <= n <= 16


def test_reduction_moves_crossover_out():
    net, device = _alexnet(), _k80()
    assert crossover_nodes(net, 256, device, FDR, reduction_factor=4) > crossover_nodes(net, 256, device, FDR)


def test_googlenet_crosses_over_later_than_alexnet():
    googlenet = load_network(REPO_DIR / "networks" / "googlenet.net")
    device = _k80()
    alexnet_n = crossover_nodes(_alexnet(), 256, device, FDR)
    googlenet_n = crossover_nodes(googlenet, 32, device, FDR)
    assert googlenet_n is not None
    assert googlenet_n > alexnet_n


def test_scan_timelines_sorted_and_validated():
    net, device = _alexnet(), _k80()
    timelines = scan_timelines(net, 256, device, FDR, [8, 1, 2])
    assert [n for n, _ in timelines] == [1, 2, 8]
    compute = [timeline.compute_s for _, timeline in timelines]
    assert compute == sorted(compute, reverse=True)
    with pytest.raises(ModelInvariantError):
        scan_timelines(net, 256, device, FDR, [3])


if __name__ == "__main__":
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_") and callable(fn)]
    print("🧪 Communication model tests")
    print("=" * 60)
    for name, fn in tests:
        fn()
        print(f"✅ {name}")
    print(f"\n🎉 {len(tests)} tests passed")
