#!/usr/bin/env python3
"""
Scaling Simulator
=================

Combines the compute, communication and data-loading models into strong
scaling reports for one scenario: a network on a device type, replicated over
n nodes of a cluster at a fixed global batch size.

Features:
- Per-n rows: compute, communication, data stall, iteration time, speedup, efficiency
- Crossover node count and time to convergence
- Large-batch trade-off rows with both speedup conventions:
  relative to the enlarged batch and relative to the original batch
- Concurrent row evaluation with order-stable reports

Usage:
    scenario = load_scenario("scenarios/alexnet-k80-fdr.json")
    report = simulate(scenario)
    print(report.to_table())
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from commmodel import ClusterSpec, CommScheme, IterationTimeline, OverlapMode, overlap_timeline
from datamodel import DatasetSpec, StorageKind, data_layer_stall
from errors import ConfigError, ModelInvariantError
from file_formats import ScenarioDocument, read_document
from netspec import DEFAULT_BACKWARD_MULTIPLIER, NetworkSpec, load_network
from perfmodel import (
    DeviceProfile,
    amdahl_curve,
    check_node_counts,
    iteration_compute_time,
    load_calibrated_profile,
)

logger = logging.getLogger(__name__)

# Measured AlexNet validation accuracy when batch and step size grow together
# while iterations shrink by the same factor. Reference only: not modeled.
LARGE_BATCH_ACCURACY_REFERENCE = (
    {'global_batch': 256, 'speedup': 1, 'step_size': 0.01, 'iterations': 450_000, 'accuracy_pct': 57.2},
    {'global_batch': 512, 'speedup': 2, 'step_size': 0.02, 'iterations': 225_000, 'accuracy_pct': 56.4},
    {'global_batch': 1024, 'speedup': 4, 'step_size': 0.04, 'iterations': 112_000, 'accuracy_pct': 54.7},
    {'global_batch': 2048, 'speedup': 8, 'step_size': 0.08, 'iterations': 56_000, 'accuracy_pct': 52.2},
)
ACCURACY_NOTE = "accuracy impact of larger batches is not modeled; see LARGE_BATCH_ACCURACY_REFERENCE"


class StepRule(Enum):
    LINEAR = "linear"       # step size grows with k
    CONSTANT = "constant"


class IterationRule(Enum):
    DIVIDE = "divide"       # iterations shrink by k
    CONSTANT = "constant"


@dataclass(frozen=True)
class LargeBatchPolicy:
    factors: Tuple[int, ...]
    step_rule: StepRule = StepRule.LINEAR
    iteration_rule: IterationRule = IterationRule.DIVIDE
    free_communication: bool = True

    def __post_init__(self):
        if not self.factors:
            raise ModelInvariantError("large-batch policy needs at least one factor")
        for k in self.factors:
            if k < 1 or k & (k - 1):
                raise ModelInvariantError(f"large-batch factor must be a power of two, got {k}")


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkSpec
    device: DeviceProfile
    cluster: ClusterSpec
    dataset: DatasetSpec
    n_list: Tuple[int, ...]
    global_batch: int
    reduction_factor: float = 1.0
    large_batch_policy: Optional[LargeBatchPolicy] = None
    overlap_mode: OverlapMode = OverlapMode.PER_LAYER
    backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER
    source_paths: Tuple[str, ...] = ()

    def __post_init__(self):
        counts = check_node_counts(self.global_batch, self.n_list, self.name)
        if tuple(counts) != tuple(self.n_list):
            raise ModelInvariantError("n_list must be sorted and free of duplicates", self.name)
        if self.reduction_factor < 1:
            raise ModelInvariantError(f"reduction_factor must be >= 1, got {self.reduction_factor}", self.name)


@dataclass(frozen=True)
class ReportRow:
    n: int
    b: int
    forward_s: float
    compute_s: float
    comm_s: float
    data_stall_s: float
    iteration_s: float
    speedup: float
    efficiency: float
    comm_bound: bool
    idle_fraction: float
    convergence_hours: float


@dataclass(frozen=True)
class ScalingReport:
    scenario: str
    network: str
    device: str
    scheme: str
    global_batch: int
    reduction_factor: float
    rows: Tuple[ReportRow, ...]
    crossover_n: Optional[int]
    serial_fraction: Optional[float] = None

    @property
    def convergence_hours(self) -> Dict[int, float]:
        return {row.n: row.convergence_hours for row in self.rows}

    def row(self, n: int) -> ReportRow:
        for row in self.rows:
            if row.n == n:
                return row
        raise KeyError(n)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows])

    def to_table(self) -> str:
        frame = self.to_dataframe()
        title = (f"📊 {self.scenario}: {self.network} on {self.device}, {self.scheme}, "
                 f"B={self.global_batch}, reduction x{self.reduction_factor:g}")
        crossover = self.crossover_n if self.crossover_n is not None else "none"
        return f"{title}\n{frame.to_string(index=False)}\ncrossover_n: {crossover}\n"

    def speedup_series(self) -> List[Tuple[str, List[Tuple[float, float]]]]:
        return [
            ('speedup', [(row.n, row.speedup) for row in self.rows]),
            ('linear', [(row.n, float(row.n)) for row in self.rows]),
        ]

    def timeline_series(self) -> List[Tuple[str, List[Tuple[float, float]]]]:
        return [
            ('compute_s', [(row.n, row.compute_s) for row in self.rows]),
            ('comm_s', [(row.n, row.comm_s) for row in self.rows]),
            ('data_stall_s', [(row.n, row.data_stall_s) for row in self.rows]),
            ('iteration_s', [(row.n, row.iteration_s) for row in self.rows]),
        ]

    def amdahl_series(self, serial_fraction: Optional[float] = None) -> List[Tuple[str, List[Tuple[float, float]]]]:
        s = self.serial_fraction if serial_fraction is None else serial_fraction
        if s is None:
            return []
        curve = amdahl_curve(s, [row.n for row in self.rows])
        return [(f'amdahl_s={s:g}', [(p.n, p.speedup) for p in curve.points])]


@dataclass(frozen=True)
class LargeBatchRow:
    k: int
    global_batch: int
    n: int
    b: int
    step_size: float
    iterations: int
    iteration_s: float
    enlarged_batch_speedup: float
    original_batch_speedup: float
    work_normalized_speedup: float    # time to solution relative to one node at the original batch
    convergence_hours: float
    accuracy_modeled: bool = False


@dataclass(frozen=True)
class LargeBatchReport:
    scenario: str
    policy: LargeBatchPolicy
    rows: Tuple[LargeBatchRow, ...]
    note: str = ACCURACY_NOTE
    reference: Tuple[Dict[str, Any], ...] = LARGE_BATCH_ACCURACY_REFERENCE

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows])

    def rows_for(self, k: int) -> List[LargeBatchRow]:
        return [row for row in self.rows if row.k == k]


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def _enum_value(enum_cls, value: str, field_name: str, location: str):
    try:
        return enum_cls(value)
    except ValueError:
        valid = ", ".join(member.value for member in enum_cls)
        raise ConfigError(f"{location}: field {field_name}: {value!r} is not one of {valid}")


def scenario_from_document(document: ScenarioDocument, data_dir: Path, location: str = "<scenario>") -> Scenario:
    data_dir = Path(data_dir)
    network = load_network(data_dir / document.network)
    device = load_calibrated_profile(data_dir / document.device, data_dir / "networks")

    cluster_doc = document.cluster
    cluster = ClusterSpec(
        n=1,
        link_bandwidth=cluster_doc.link_bandwidth,
        bandwidth_efficiency=cluster_doc.bandwidth_efficiency,
        link_latency=cluster_doc.link_latency,
        scheme=_enum_value(CommScheme, cluster_doc.scheme, 'cluster.scheme', location),
    )
    dataset_doc = document.dataset
    dataset = DatasetSpec(
        total_bytes=dataset_doc.total_bytes,
        sample_count=dataset_doc.sample_count,
        epochs_to_convergence=dataset_doc.epochs_to_convergence,
        storage=_enum_value(StorageKind, dataset_doc.storage, 'dataset.storage', location),
        fs_metadata_latency=dataset_doc.fs_metadata_latency,
    )

    policy = None
    if document.large_batch_policy is not None:
        policy_doc = document.large_batch_policy
        policy = LargeBatchPolicy(
            factors=tuple(policy_doc.factors),
            step_rule=_enum_value(StepRule, policy_doc.step_rule, 'large_batch_policy.step_rule', location),
            iteration_rule=_enum_value(IterationRule, policy_doc.iteration_rule,
                                       'large_batch_policy.iteration_rule', location),
            free_communication=policy_doc.free_communication,
        )

    return Scenario(
        name=document.name,
        network=network,
        device=device,
        cluster=cluster,
        dataset=dataset,
        n_list=tuple(sorted(set(document.n_list))),
        global_batch=document.global_batch or network.default_batch,
        reduction_factor=document.reduction_factor,
        large_batch_policy=policy,
        overlap_mode=_enum_value(OverlapMode, document.overlap_mode, 'overlap_mode', location),
        backward_multiplier=document.backward_multiplier,
        source_paths=(location, str(data_dir / document.network), str(data_dir / document.device)),
    )


def load_scenario(path: Path, data_dir: Optional[Path] = None) -> Scenario:
    """Load a scenario; referenced files resolve against ``data_dir`` (default: the repo layout)"""
    path = Path(path)
    document = read_document(path, ScenarioDocument)
    base = Path(data_dir) if data_dir else path.resolve().parent.parent
    scenario = scenario_from_document(document, base, str(path))
    logger.info(f"✅ Loaded scenario {scenario.name}: {scenario.network.name} on {scenario.device.name}, "
                f"n in {list(scenario.n_list)}")
    return scenario


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def evaluate_row(scenario: Scenario, n: int) -> Tuple[IterationTimeline, float]:
    """Timeline and data-layer stall of one iteration on n nodes"""
    b = scenario.global_batch // n
    cluster = scenario.cluster.with_nodes(n)
    try:
        timeline = overlap_timeline(scenario.network, b, scenario.device, cluster, scenario.reduction_factor,
                                    scenario.overlap_mode, scenario.backward_multiplier)
        residual = min(1.0, max(0.0, 1.0 - timeline.comm_busy_s / timeline.iteration_time))
        batch_bytes = b * scenario.dataset.sample_bytes
        stall = data_layer_stall(batch_bytes, cluster, residual, scenario.dataset, samples=b)
    except ModelInvariantError as error:
        raise type(error)(str(error), f"{scenario.name} n={n}")
    return timeline, stall


def _row_seconds(scenario: Scenario, n: int) -> float:
    timeline, stall = evaluate_row(scenario, n)
    return timeline.iteration_time + stall


def simulate(scenario: Scenario, max_workers: Optional[int] = None) -> ScalingReport:
    """Strong-scaling report over the scenario's node counts"""
    logger.info(f"🚀 Simulating {scenario.name} for n in {list(scenario.n_list)}")
    baseline = _row_seconds(scenario, 1)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        results = list(executor.map(lambda n: evaluate_row(scenario, n), scenario.n_list))

    rows = []
    for n, (timeline, stall) in zip(scenario.n_list, results):
        iteration_s = timeline.iteration_time + stall
        speedup = baseline / iteration_s
        rows.append(ReportRow(
            n=n,
            b=scenario.global_batch // n,
            forward_s=timeline.forward_end,
            compute_s=timeline.compute_s,
            comm_s=timeline.comm_s,
            data_stall_s=stall,
            iteration_s=iteration_s,
            speedup=speedup,
            efficiency=speedup / n,
            comm_bound=timeline.comm_bound,
            idle_fraction=timeline.idle_fraction,
            convergence_hours=scenario.network.iterations_to_convergence * iteration_s / 3600.0,
        ))

    crossover = next((row.n for row in rows if row.comm_bound), None)
    report = ScalingReport(
        scenario=scenario.name,
        network=scenario.network.name,
        device=scenario.device.name,
        scheme=scenario.cluster.scheme.value,
        global_batch=scenario.global_batch,
        reduction_factor=scenario.reduction_factor,
        rows=tuple(rows),
        crossover_n=crossover,
        serial_fraction=scenario.network.serial_fraction,
    )
    logger.info(f"✅ {scenario.name}: {len(rows)} rows, crossover_n={crossover}")
    return report


def time_to_convergence(net: NetworkSpec, device: DeviceProfile, n: int, scenario: Scenario) -> float:
    """Hours to run the network's iteration count on n nodes of the scenario's cluster.

    A network other than the scenario's own runs at its default global batch.
    """
    global_batch = scenario.global_batch if net == scenario.network else net.default_batch
    variant = replace(scenario, network=net, device=device, global_batch=global_batch,
                      n_list=(n,), large_batch_policy=None)
    return net.iterations_to_convergence * _row_seconds(variant, n) / 3600.0


def large_batch_tradeoff(scenario: Scenario, policy: Optional[LargeBatchPolicy] = None,
                         max_workers: Optional[int] = None) -> LargeBatchReport:
    """Speedups when the global batch grows by k, under both baseline conventions.

    With ``free_communication`` (the default) iteration times are compute only,
    so the k=1 rows match ``simulate`` only for a policy with
    ``free_communication=False``.

    Args:
        scenario: Network, device and cluster to evaluate; its n_list sets the rows
        policy: Factors and step/iteration rules (default: the scenario's policy)
        max_workers: Thread pool size for the (k, n) evaluations

    Returns:
        LargeBatchReport with one row per (k, n), accuracy flagged as not modeled
    """
    policy = policy or scenario.large_batch_policy or LargeBatchPolicy(factors=(1,))
    net = scenario.network

    def seconds(global_batch: int, n: int) -> float:
        if policy.free_communication:
            return iteration_compute_time(net, global_batch // n, scenario.device, scenario.backward_multiplier)
        variant = replace(scenario, global_batch=global_batch, large_batch_policy=None)
        return _row_seconds(variant, n)

    # k=1 is always evaluated: it is the original-batch baseline
    counts = sorted({1, *scenario.n_list})
    jobs = [(k, n) for k in sorted(set(policy.factors) | {1}) for n in counts]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        times = list(executor.map(lambda job: seconds(job[0] * scenario.global_batch, job[1]), jobs))
    table = dict(zip(jobs, times))
    original = {n: table[(1, n)] for n in counts}

    rows = []
    for k in sorted(set(policy.factors)):
        global_batch = k * scenario.global_batch
        step = net.default_step * k if policy.step_rule == StepRule.LINEAR else net.default_step
        iterations = (max(1, net.iterations_to_convergence // k) if policy.iteration_rule == IterationRule.DIVIDE
                      else net.iterations_to_convergence)
        for n in scenario.n_list:
            iteration_s = table[(k, n)]
            rows.append(LargeBatchRow(
                k=k,
                global_batch=global_batch,
                n=n,
                b=global_batch // n,
                step_size=step,
                iterations=iterations,
                iteration_s=iteration_s,
                enlarged_batch_speedup=table[(k, 1)] / iteration_s,
                original_batch_speedup=original[1] / original[n],
                work_normalized_speedup=(net.iterations_to_convergence * original[1]
                                         / (iterations * iteration_s)),
                convergence_hours=iterations * iteration_s / 3600.0,
            ))

    logger.info(f"📊 Large-batch trade-off for {scenario.name}: factors {sorted(set(policy.factors))}")
    return LargeBatchReport(scenario=scenario.name, policy=policy, rows=tuple(rows))


__all__ = [
    'LARGE_BATCH_ACCURACY_REFERENCE',
    'ACCURACY_NOTE',
    'StepRule',
    'IterationRule',
    'LargeBatchPolicy',
    'Scenario',
    'ReportRow',
    'ScalingReport',
    'LargeBatchRow',
    'LargeBatchReport',
    'scenario_from_document',
    'load_scenario',
    'evaluate_row',
    'simulate',
    'time_to_convergence',
    'large_batch_tradeoff',
]
