#!/usr/bin/env python3
"""
Training Data Traffic Model
===========================

Bytes moved to feed training data to the workers, and the per-iteration stall
of the data layer when samples come from a shared filesystem over the same
link the SGD exchange uses.
"""

import logging
import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from commmodel import ClusterSpec
from errors import LinkSaturatedError, ModelInvariantError

logger = logging.getLogger(__name__)


class StorageKind(Enum):
    NODE_LOCAL = "NodeLocal"
    SHARED_FS = "SharedFS"


@dataclass(frozen=True)
class DatasetSpec:
    total_bytes: float
    sample_count: int
    epochs_to_convergence: int
    storage: StorageKind = StorageKind.NODE_LOCAL
    fs_metadata_latency: float = 0.0   # seconds per file open

    def __post_init__(self):
        if not self.total_bytes > 0:
            raise ModelInvariantError(f"dataset total_bytes must be > 0, got {self.total_bytes}")
        if self.sample_count < 1:
            raise ModelInvariantError(f"dataset sample_count must be >= 1, got {self.sample_count}")
        if self.epochs_to_convergence < 0:
            raise ModelInvariantError("dataset epochs_to_convergence must be >= 0")
        if self.fs_metadata_latency < 0:
            raise ModelInvariantError("dataset fs_metadata_latency must be >= 0")

    @property
    def sample_bytes(self) -> float:
        return self.total_bytes / self.sample_count

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['storage'] = self.storage.value
        return data


def epoch_traffic(dataset: DatasetSpec) -> float:
    """Steady-state bytes read over the whole training run"""
    if dataset.storage == StorageKind.NODE_LOCAL:
        return 0.0
    return dataset.epochs_to_convergence * dataset.total_bytes


def initial_copy_traffic(dataset: DatasetSpec, n: int) -> float:
    """Bytes staged before training when every node keeps a local copy"""
    if n < 1:
        raise ModelInvariantError(f"node count must be >= 1, got {n}")
    if dataset.storage == StorageKind.NODE_LOCAL:
        return n * dataset.total_bytes
    return 0.0


def training_data_traffic(dataset: DatasetSpec, n: int) -> Tuple[float, float]:
    """(initial copy, steady state) bytes for n nodes"""
    return initial_copy_traffic(dataset, n), epoch_traffic(dataset)


def data_layer_stall(batch_bytes: float, cluster: ClusterSpec, residual_bandwidth_fraction: float,
                     dataset: DatasetSpec, samples: Optional[int] = None) -> float:
    """
    Seconds per iteration the compute units wait on the data layer.

    Args:
        batch_bytes: Training data read per node per iteration
        cluster: Link the data shares with SGD traffic
        residual_bandwidth_fraction: Share of the link left over by SGD traffic, in [0, 1]
        dataset: Storage kind and per-file metadata latency
        samples: Files opened per iteration (default: batch_bytes / sample_bytes)

    Returns:
        0 for node-local data, else transfer time plus metadata latency

    Raises:
        LinkSaturatedError: SGD traffic leaves no bandwidth for shared-FS reads
    """
    if not 0.0 <= residual_bandwidth_fraction <= 1.0:
        raise ModelInvariantError(
            f"residual bandwidth fraction must lie in [0, 1], got {residual_bandwidth_fraction}")
    if dataset.storage == StorageKind.NODE_LOCAL:
        return 0.0
    if residual_bandwidth_fraction == 0.0:
        raise LinkSaturatedError("SGD traffic leaves no bandwidth for loading training data")

    if samples is None:
        samples = math.ceil(batch_bytes / dataset.sample_bytes)
    transfer = batch_bytes / (cluster.effective_bandwidth * residual_bandwidth_fraction)
    return transfer + samples * dataset.fs_metadata_latency


__all__ = [
    'StorageKind',
    'DatasetSpec',
    'epoch_traffic',
    'initial_copy_traffic',
    'training_data_traffic',
    'data_layer_stall',
]
