#!/usr/bin/env python3
"""
Communication Model
===================

Alpha-beta cost model of the per-iteration gradient/model exchange in
synchronous data-parallel SGD, and the timeline of one iteration with
communication overlapping the backward pass.

Features:
- Parameter server, binary tree and ring all-reduce schemes
- Wire traffic and transfer time per iteration
- Per-layer streaming overlap (gradients sent in backward order, never before
  the forward pass has finished) and a pessimistic whole-model mode
- Crossover search for the first communication-bound node count
"""

import logging
from dataclasses import dataclass, replace, asdict
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

from errors import ModelInvariantError
from netspec import DEFAULT_BACKWARD_MULTIPLIER, NetworkSpec, layer_bytes, model_bytes
from perfmodel import DeviceProfile, layer_phase_times

logger = logging.getLogger(__name__)

FDR_LINK_BANDWIDTH = 6.8e9       # bytes/s, FDR InfiniBand peak
DEFAULT_BANDWIDTH_EFFICIENCY = 0.5


class CommScheme(Enum):
    """Gradient aggregation / model distribution scheme"""
    PARAMETER_SERVER = "ParameterServer"
    BINARY_TREE = "BinaryTree"
    RING_ALL_REDUCE = "RingAllReduce"


class OverlapMode(Enum):
    PER_LAYER = "PerLayer"
    WHOLE_MODEL = "WholeModel"


@dataclass(frozen=True)
class ClusterSpec:
    n: int
    link_bandwidth: float = FDR_LINK_BANDWIDTH
    bandwidth_efficiency: float = DEFAULT_BANDWIDTH_EFFICIENCY
    link_latency: float = 0.0
    scheme: CommScheme = CommScheme.BINARY_TREE

    def __post_init__(self):
        if self.n < 1:
            raise ModelInvariantError(f"cluster node count must be >= 1, got {self.n}")
        if not self.link_bandwidth > 0:
            raise ModelInvariantError(f"link_bandwidth must be > 0, got {self.link_bandwidth}")
        if not 0.0 < self.bandwidth_efficiency <= 1.0:
            raise ModelInvariantError(f"bandwidth_efficiency must lie in (0, 1], got {self.bandwidth_efficiency}")
        if self.link_latency < 0:
            raise ModelInvariantError(f"link_latency must be >= 0, got {self.link_latency}")

    @property
    def effective_bandwidth(self) -> float:
        return self.link_bandwidth * self.bandwidth_efficiency

    def with_nodes(self, n: int) -> 'ClusterSpec':
        return replace(self, n=n)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['scheme'] = self.scheme.value
        return data


@dataclass(frozen=True)
class IterationTimeline:
    """Phase boundaries of one iteration, measured from its start (seconds)"""
    forward_end: float
    backward_end: float
    comm_end: float
    iteration_time: float
    idle_fraction: float
    comm_busy_s: float = 0.0
    comm_s: float = 0.0

    @property
    def comm_bound(self) -> bool:
        return self.comm_end > self.backward_end

    @property
    def compute_s(self) -> float:
        return self.backward_end

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['comm_bound'] = self.comm_bound
        return data


def tree_stages(n: int) -> int:
    """ceil(log2 n) peer-to-peer sends in each direction"""
    return (n - 1).bit_length()


def per_iteration_traffic(scheme: CommScheme, n: int, model_size: float) -> float:
    """Total bytes on the wire for one gradient reduction plus model broadcast"""
    if n < 1:
        raise ModelInvariantError(f"node count must be >= 1, got {n}")
    if n == 1:
        return 0.0
    if scheme == CommScheme.RING_ALL_REDUCE:
        per_node = 2.0 * (n - 1) / n * model_size
        return per_node * n
    # a parameter server and a tree over n nodes both use n-1 links, each carrying M up and M down
    return 2.0 * (n - 1) * model_size


def comm_time(scheme: CommScheme, n: int, model_size: float, cluster: ClusterSpec) -> float:
    """
    Seconds to exchange ``model_size`` bytes of gradients and model among n nodes.

    Args:
        scheme: Aggregation pattern (parameter server, binary tree or ring all-reduce)
        n: Number of nodes; n=1 needs no exchange
        model_size: Bytes per worker after any reduction factor
        cluster: Link bandwidth, efficiency and per-message latency

    Returns:
        Wall-clock seconds, non-decreasing in n and in model_size
    """
    if n < 1:
        raise ModelInvariantError(f"node count must be >= 1, got {n}")
    if n == 1:
        return 0.0

    bandwidth = cluster.effective_bandwidth
    latency = cluster.link_latency
    if scheme == CommScheme.PARAMETER_SERVER:
        return 2.0 * (n - 1) * model_size / bandwidth + 2.0 * latency
    if scheme == CommScheme.BINARY_TREE:
        return 2.0 * tree_stages(n) * (model_size / bandwidth + latency)
    return 2.0 * (n - 1) * (model_size / n) / bandwidth + 2.0 * (n - 1) * latency


def overlap_timeline(net: NetworkSpec, b: int, device: DeviceProfile, cluster: ClusterSpec,
                     reduction_factor: float = 1.0, mode: OverlapMode = OverlapMode.PER_LAYER,
                     backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> IterationTimeline:
    """Timeline of one iteration with ``cluster.n`` workers at local batch ``b``.

    Per-layer mode streams a layer's gradient while its backward runs: the
    transfer begins no earlier than the layer's backward start (hence after
    forward_end), ends no earlier than its backward end, and transfers are
    serialized on the link in backward order.
    """
    if reduction_factor < 1:
        raise ModelInvariantError(f"reduction_factor must be >= 1, got {reduction_factor}", net.name)

    phases = layer_phase_times(net, b, device, backward_multiplier)
    forward_end = sum(fwd for fwd, _ in phases)
    n = cluster.n
    total_comm = comm_time(cluster.scheme, n, model_bytes(net, reduction_factor), cluster)

    clock = forward_end
    link_free = forward_end
    busy = 0.0
    for layer, (_, bwd) in zip(reversed(net.layers), reversed(phases)):
        start = clock
        clock += bwd
        if mode != OverlapMode.PER_LAYER or n == 1:
            continue
        size = layer_bytes(layer, net.precision_bytes, reduction_factor)
        if size <= 0:
            continue
        transfer = comm_time(cluster.scheme, n, size, cluster)
        link_free = max(max(link_free, start) + transfer, clock)
        busy += transfer
    backward_end = clock

    if mode == OverlapMode.WHOLE_MODEL:
        comm_end = backward_end + total_comm
        busy = total_comm
    else:
        comm_end = max(backward_end, link_free)

    iteration_time = max(backward_end, comm_end)
    idle_fraction = max(0.0, comm_end - backward_end) / iteration_time
    return IterationTimeline(
        forward_end=forward_end,
        backward_end=backward_end,
        comm_end=comm_end,
        iteration_time=iteration_time,
        idle_fraction=idle_fraction,
        comm_busy_s=busy,
        comm_s=total_comm,
    )


def scan_timelines(net: NetworkSpec, global_batch: int, device: DeviceProfile, cluster: ClusterSpec,
                   n_list: Iterable[int], reduction_factor: float = 1.0,
                   mode: OverlapMode = OverlapMode.PER_LAYER,
                   backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> List[Tuple[int, IterationTimeline]]:
    """(n, timeline) at local batch B/n for each n in ascending order"""
    timelines = []
    for n in sorted(set(n_list)):
        if n < 1 or global_batch % n:
            raise ModelInvariantError(f"n={n} does not divide the global batch B={global_batch}", net.name)
        timeline = overlap_timeline(net, global_batch // n, device, cluster.with_nodes(n), reduction_factor,
                                    mode, backward_multiplier)
        timelines.append((n, timeline))
    return timelines


def crossover_nodes(net: NetworkSpec, global_batch: int, device: DeviceProfile, cluster: ClusterSpec,
                    reduction_factor: float = 1.0, candidates: Optional[Iterable[int]] = None,
                    mode: OverlapMode = OverlapMode.PER_LAYER) -> Optional[int]:
    """Smallest n (dividing B) whose iteration is communication-bound, None if never"""
    if candidates is None:
        scan = [n for n in range(1, global_batch + 1) if global_batch % n == 0]
    else:
        scan = [n for n in set(candidates) if 1 <= n <= global_batch and global_batch % n == 0]

    for n, timeline in scan_timelines(net, global_batch, device, cluster, scan, reduction_factor, mode):
        if timeline.comm_bound:
            logger.debug(f"{net.name}: communication-bound from n={n} (idle {timeline.idle_fraction:.1%})")
            return n
    return None


__all__ = [
    'FDR_LINK_BANDWIDTH',
    'DEFAULT_BANDWIDTH_EFFICIENCY',
    'CommScheme',
    'OverlapMode',
    'ClusterSpec',
    'IterationTimeline',
    'tree_stages',
    'per_iteration_traffic',
    'comm_time',
    'overlap_timeline',
    'scan_timelines',
    'crossover_nodes',
]
