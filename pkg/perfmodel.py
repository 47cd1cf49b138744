#!/usr/bin/env python3
"""
Compute Performance Model
=========================

Maps layer FLOPs and sgemm shapes to compute times on a device profile, and
derives the batch-size and Amdahl scalability curves of data-parallel training.

Features:
- GEMM efficiency curves keyed on the left-matrix row count m (power law or table)
- Per-kind and per-layer (glob) efficiency overrides
- Fixed per-layer latency (kernel launch / data load)
- Least-squares calibration of effective throughput against measured anchors
- Free-communication speedup curves and Amdahl's law

Usage:
    device = load_calibrated_profile("devices/k80.json", "networks")
    seconds = iteration_compute_time(net, 256, device)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from fnmatch import fnmatchcase
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ConfigError, ModelInvariantError
from file_formats import DeviceDocument, read_document
from netspec import (
    DEFAULT_BACKWARD_MULTIPLIER,
    GemmShape,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    element_flops,
    gemm_shapes,
    load_network,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GemmEfficiencyCurve:
    """Efficiency of an sgemm as a function of m; 1.0 at and above saturation"""
    saturation_m: int
    exponent: float = 0.5
    points: Optional[Tuple[Tuple[int, float], ...]] = None

    def __post_init__(self):
        if self.saturation_m < 1:
            raise ModelInvariantError(f"saturation_m must be >= 1, got {self.saturation_m}")
        if not 0.0 < self.exponent <= 1.0:
            raise ModelInvariantError(f"GEMM curve exponent must lie in (0, 1], got {self.exponent}")
        if self.points is not None:
            ms = [m for m, _ in self.points]
            effs = [e for _, e in self.points]
            if any(b <= a for a, b in zip(ms, ms[1:])):
                raise ModelInvariantError("GEMM curve points must have strictly increasing m")
            if any(b < a for a, b in zip(effs, effs[1:])):
                raise ModelInvariantError("GEMM curve must be monotone non-decreasing in m")
            if any(not 0.0 < e <= 1.0 for e in effs):
                raise ModelInvariantError("GEMM curve efficiencies must lie in (0, 1]")
            if effs[-1] != 1.0 or ms[-1] != self.saturation_m:
                raise ModelInvariantError("GEMM curve table must end at (saturation_m, 1.0)")

    @classmethod
    def from_table(cls, points: Sequence[Tuple[int, float]]) -> 'GemmEfficiencyCurve':
        table = tuple((int(m), float(e)) for m, e in points)
        if not table:
            raise ModelInvariantError("GEMM curve table is empty")
        return cls(saturation_m=table[-1][0], points=table)

    def efficiency(self, m: int) -> float:
        if m >= self.saturation_m:
            return 1.0
        if self.points is not None:
            ms, effs = zip(*self.points)
            return float(np.interp(m, ms, effs))
        return (m / self.saturation_m) ** self.exponent


@dataclass(frozen=True)
class CalibrationAnchor:
    """Measured seconds per iteration of ``network`` at local batch ``batch``"""
    network: NetworkSpec
    batch: int
    seconds: float


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    effective_flops: float
    gemm_curve: GemmEfficiencyCurve
    per_kind_efficiency: Dict[str, float] = field(default_factory=dict)
    per_layer_efficiency: Tuple[Tuple[str, float], ...] = ()
    fixed_layer_latency: float = 0.0
    anchors: Tuple[CalibrationAnchor, ...] = ()
    description: str = ""

    def __post_init__(self):
        if not self.effective_flops > 0:
            raise ModelInvariantError(f"effective_flops must be > 0, got {self.effective_flops}", self.name)
        if self.fixed_layer_latency < 0:
            raise ModelInvariantError("fixed_layer_latency must be >= 0", self.name)
        valid_kinds = {kind.value for kind in LayerKind}
        for kind, eff in self.per_kind_efficiency.items():
            if kind not in valid_kinds:
                raise ModelInvariantError(f"per_kind_efficiency: unknown layer kind {kind!r}", self.name)
            if not 0.0 < eff <= 1.0:
                raise ModelInvariantError(f"per_kind_efficiency[{kind}] must lie in (0, 1], got {eff}", self.name)
        for pattern, eff in self.per_layer_efficiency:
            if not 0.0 < eff <= 1.0:
                raise ModelInvariantError(f"per_layer_efficiency[{pattern}] must lie in (0, 1], got {eff}", self.name)

    def layer_efficiency(self, layer: LayerSpec) -> float:
        """First matching per-layer glob wins, else the kind efficiency (default 1)"""
        for pattern, eff in self.per_layer_efficiency:
            if fnmatchcase(layer.name, pattern):
                return eff
        return self.per_kind_efficiency.get(layer.kind.value, 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'description': self.description,
            'effective_flops': self.effective_flops,
            'per_kind_efficiency': dict(self.per_kind_efficiency),
            'per_layer_efficiency': [
                {'pattern': pattern, 'efficiency': eff} for pattern, eff in self.per_layer_efficiency
            ],
            'gemm_curve': {
                'saturation_m': self.gemm_curve.saturation_m,
                'exponent': self.gemm_curve.exponent,
                'points': [list(p) for p in self.gemm_curve.points] if self.gemm_curve.points else None,
            },
            'fixed_layer_latency': self.fixed_layer_latency,
        }


@dataclass(frozen=True)
class ScalingPoint:
    n: int
    speedup: float
    efficiency: float


@dataclass(frozen=True)
class ScalingCurve:
    points: Tuple[ScalingPoint, ...]

    def __post_init__(self):
        ns = [p.n for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ModelInvariantError("scaling curve node counts must be strictly increasing")

    def speedup(self, n: int) -> float:
        for point in self.points:
            if point.n == n:
                return point.speedup
        raise KeyError(n)

    def to_dict(self) -> Dict[str, Any]:
        return {'points': [asdict(p) for p in self.points]}


# ---------------------------------------------------------------------------
# Profiles on disk
# ---------------------------------------------------------------------------

def device_from_document(document: DeviceDocument, anchors: Sequence[CalibrationAnchor] = ()) -> DeviceProfile:
    curve_doc = document.gemm_curve
    if curve_doc.points:
        curve = GemmEfficiencyCurve.from_table(curve_doc.points)
    elif curve_doc.saturation_m is not None:
        curve = GemmEfficiencyCurve(saturation_m=curve_doc.saturation_m, exponent=curve_doc.exponent)
    else:
        raise ConfigError(f"device {document.name}: gemm_curve needs saturation_m or points")

    return DeviceProfile(
        name=document.name,
        description=document.description,
        effective_flops=document.effective_flops,
        gemm_curve=curve,
        per_kind_efficiency=dict(document.per_kind_efficiency),
        per_layer_efficiency=tuple((item.pattern, item.efficiency) for item in document.per_layer_efficiency),
        fixed_layer_latency=document.fixed_layer_latency,
        anchors=tuple(anchors),
    )


def load_device_profile(path: Path, networks_dir: Optional[Path] = None) -> DeviceProfile:
    """Load a profile as written; anchor networks resolve against ``networks_dir``"""
    path = Path(path)
    document = read_document(path, DeviceDocument)
    base = Path(networks_dir) if networks_dir else path.parent.parent / "networks"
    anchors = [
        CalibrationAnchor(load_network(base / anchor.network), anchor.batch, anchor.seconds)
        for anchor in document.anchors
    ]
    return device_from_document(document, anchors)


def load_calibrated_profile(path: Path, networks_dir: Optional[Path] = None) -> DeviceProfile:
    """Load a profile and fit its throughput to the anchors it ships with"""
    device = load_device_profile(path, networks_dir)
    if not device.anchors:
        logger.info(f"Device {device.name} has no anchors, using effective_flops as written")
        return device
    return calibrate(device, device.anchors)


# ---------------------------------------------------------------------------
# Time model
# ---------------------------------------------------------------------------

def gemm_efficiency(shape: GemmShape, device: DeviceProfile) -> float:
    return device.gemm_curve.efficiency(shape.m)


def layer_compute_time(layer: LayerSpec, b: int, device: DeviceProfile, backward: bool = False,
                       backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> float:
    """
    Seconds for one forward (or backward) pass of ``layer`` at local batch ``b``.

    Args:
        layer: Layer to time
        b: Local batch size on one node
        device: Throughput, GEMM efficiency curve and per-layer latency
        backward: Time the backward pass instead of the forward pass
        backward_multiplier: Backward FLOPs as a multiple of forward FLOPs

    Returns:
        FLOPs divided by effective throughput, plus the fixed layer latency
    """
    if b < 1:
        raise ModelInvariantError(f"batch size must be >= 1, got {b}", layer.name)

    throughput = device.effective_flops * device.layer_efficiency(layer)
    seconds = sum(shape.flops / (throughput * gemm_efficiency(shape, device)) for shape in gemm_shapes(layer, b))
    seconds += element_flops(layer, b) / throughput
    if backward:
        seconds *= backward_multiplier
    return seconds + device.fixed_layer_latency


def layer_phase_times(net: NetworkSpec, b: int, device: DeviceProfile,
                      backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> List[Tuple[float, float]]:
    """(forward, backward) seconds for every layer in network order"""
    return [
        (layer_compute_time(layer, b, device),
         layer_compute_time(layer, b, device, backward=True, backward_multiplier=backward_multiplier))
        for layer in net.layers
    ]


def iteration_compute_time(net: NetworkSpec, b: int, device: DeviceProfile,
                           backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> float:
    phases = layer_phase_times(net, b, device, backward_multiplier)
    return sum(fwd for fwd, _ in phases) + sum(bwd for _, bwd in phases)


def layer_time_breakdown(net: NetworkSpec, b: int, device: DeviceProfile,
                         backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> pd.DataFrame:
    """Per-layer forward/backward seconds and share of the iteration"""
    phases = layer_phase_times(net, b, device, backward_multiplier)
    frame = pd.DataFrame({
        'layer': [layer.name for layer in net.layers],
        'kind': [layer.kind.value for layer in net.layers],
        'forward_s': [fwd for fwd, _ in phases],
        'backward_s': [bwd for _, bwd in phases],
    })
    frame['total_s'] = frame['forward_s'] + frame['backward_s']
    frame['share'] = frame['total_s'] / frame['total_s'].sum()
    return frame


def kind_time_shares(net: NetworkSpec, b: int, device: DeviceProfile) -> Dict[str, float]:
    """Relative compute time per layer kind"""
    frame = layer_time_breakdown(net, b, device)
    return frame.groupby('kind')['share'].sum().sort_values(ascending=False).to_dict()


def calibrate(device: DeviceProfile, anchors: Sequence[CalibrationAnchor]) -> DeviceProfile:
    """Scale effective_flops so predicted times fit the anchors in least squares.

    Predicted time is work/F + latency, so the fit is linear in 1/F.
    """
    if not anchors:
        raise ModelInvariantError("calibration needs at least one anchor", device.name)

    unit = replace(device, effective_flops=1.0, fixed_layer_latency=0.0)
    numerator = 0.0
    denominator = 0.0
    for anchor in anchors:
        if not anchor.seconds > 0:
            raise ModelInvariantError(f"anchor {anchor.network.name}@{anchor.batch}: measured time must be > 0",
                                      device.name)
        work = iteration_compute_time(anchor.network, anchor.batch, unit)
        latency = 2 * len(anchor.network.layers) * device.fixed_layer_latency
        numerator += work * (anchor.seconds - latency)
        denominator += work * work

    inverse_flops = numerator / denominator
    if inverse_flops <= 0:
        raise ModelInvariantError("anchors are faster than the fixed layer latency alone", device.name)

    calibrated = replace(device, effective_flops=1.0 / inverse_flops, anchors=tuple(anchors))
    logger.info(f"📊 Calibrated {device.name}: effective_flops={calibrated.effective_flops:.4e} "
                f"from {len(anchors)} anchor(s)")
    return calibrated


# ---------------------------------------------------------------------------
# Scalability curves
# ---------------------------------------------------------------------------

def amdahl_speedup(serial_fraction: float, n: int) -> float:
    if not 0.0 <= serial_fraction <= 1.0:
        raise ModelInvariantError(f"serial fraction must lie in [0, 1], got {serial_fraction}")
    if n < 1:
        raise ModelInvariantError(f"node count must be >= 1, got {n}")
    return 1.0 / (serial_fraction + (1.0 - serial_fraction) / n)


def amdahl_curve(serial_fraction: float, n_list: Iterable[int]) -> ScalingCurve:
    points = []
    for n in sorted(set(n_list)):
        speedup = amdahl_speedup(serial_fraction, n)
        points.append(ScalingPoint(n, speedup, speedup / n))
    return ScalingCurve(tuple(points))


def check_node_counts(global_batch: int, n_list: Iterable[int], context: Optional[str] = None) -> List[int]:
    """Sorted unique node counts, each dividing the global batch"""
    counts = sorted(set(n_list))
    if not counts:
        raise ModelInvariantError("node list is empty", context)
    for n in counts:
        if n < 1:
            raise ModelInvariantError(f"node count must be >= 1, got {n}", context)
        if n > global_batch:
            raise ModelInvariantError(f"n={n} exceeds the global batch B={global_batch}", context)
        if global_batch % n:
            raise ModelInvariantError(f"n={n} does not divide the global batch B={global_batch}", context)
    return counts


def free_comm_speedup_curve(net: NetworkSpec, global_batch: int, device: DeviceProfile,
                            n_list: Iterable[int], max_workers: Optional[int] = None) -> ScalingCurve:
    """Speedup when communication is free: t(B) / t(B/n) measured on one node"""
    counts = check_node_counts(global_batch, n_list, net.name)
    baseline = iteration_compute_time(net, global_batch, device)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        times = list(executor.map(lambda n: iteration_compute_time(net, global_batch // n, device), counts))

    points = []
    for n, seconds in zip(counts, times):
        speedup = baseline / seconds
        points.append(ScalingPoint(n, speedup, speedup / n))
    return ScalingCurve(tuple(points))


__all__ = [
    'GemmEfficiencyCurve',
    'CalibrationAnchor',
    'DeviceProfile',
    'ScalingPoint',
    'ScalingCurve',
    'device_from_document',
    'load_device_profile',
    'load_calibrated_profile',
    'gemm_efficiency',
    'layer_compute_time',
    'layer_phase_times',
    'iteration_compute_time',
    'layer_time_breakdown',
    'kind_time_shares',
    'calibrate',
    'amdahl_speedup',
    'amdahl_curve',
    'check_node_counts',
    'free_comm_speedup_curve',
]
