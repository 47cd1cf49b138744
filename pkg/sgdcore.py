#!/usr/bin/env python3
"""
Toy Data-Parallel SGD
=====================

A small numpy reference of synchronous mini-batch SGD on a one-hidden-layer
perceptron (tanh hidden layer, softmax cross-entropy output), used to check
the algorithmic assumptions behind data-parallel training.

Features:
- Seeded synthetic blob datasets and train/validation splits
- Analytic forward/backward pass with divergence detection
- Sequential training and a map-reduce variant over logical workers that
  averages shard gradients in a fixed order
- Batch-size / step-size sweeps reported as tables

Aggregation is the mean of shard gradients, so the step size keeps its meaning
for any worker count. Momentum is not used.

Usage:
    data = make_blobs_dataset(512, seed=7)
    model = parallel_train(SgdConfig(global_batch=64, n_workers=4, step_size=0.1, iterations=200), data)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ModelInvariantError, NumericDivergenceError
from scalesim import ACCURACY_NOTE, LARGE_BATCH_ACCURACY_REFERENCE

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_UNITS = 16


@dataclass(frozen=True)
class ToyDataset:
    features: np.ndarray   # (samples, inputs) float64
    labels: np.ndarray     # (samples,) int
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ModelInvariantError("dataset needs 2-d features and 1-d labels")
        if len(self.features) != len(self.labels):
            raise ModelInvariantError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_inputs(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ModelState:
    w: np.ndarray                  # flat weights: W1, b1, W2, b2
    dims: Tuple[int, int, int]     # (inputs, hidden, classes)
    t: int = 0

    def __post_init__(self):
        if self.w.shape != (parameter_count(self.dims),):
            raise ModelInvariantError(f"weight vector of shape {self.w.shape} does not fit dims {self.dims}")
        if not np.all(np.isfinite(self.w)):
            raise ModelInvariantError(f"weights must be finite (iteration {self.t})")

    @classmethod
    def zeros(cls, dims: Tuple[int, int, int]) -> 'ModelState':
        return cls(np.zeros(parameter_count(dims)), tuple(dims))

    def unpack(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        inputs, hidden, classes = self.dims
        offsets = np.cumsum([0, inputs * hidden, hidden, hidden * classes, classes])
        w1 = self.w[offsets[0]:offsets[1]].reshape(inputs, hidden)
        b1 = self.w[offsets[1]:offsets[2]]
        w2 = self.w[offsets[2]:offsets[3]].reshape(hidden, classes)
        b2 = self.w[offsets[3]:offsets[4]]
        return w1, b1, w2, b2


@dataclass(frozen=True)
class Gradient:
    dw: np.ndarray

    def __post_init__(self):
        if self.dw.ndim != 1:
            raise ModelInvariantError(f"gradient must be a flat vector, got shape {self.dw.shape}")
        if not np.all(np.isfinite(self.dw)):
            raise ModelInvariantError("gradient must be finite")


@dataclass(frozen=True)
class SgdConfig:
    global_batch: int
    step_size: float
    iterations: int
    n_workers: int = 1
    seed: int = 0
    hidden_units: int = DEFAULT_HIDDEN_UNITS

    def __post_init__(self):
        if self.global_batch < 1:
            raise ModelInvariantError(f"global batch must be >= 1, got {self.global_batch}")
        if self.n_workers < 1 or self.global_batch % self.n_workers:
            raise ModelInvariantError(
                f"n_workers={self.n_workers} must divide the global batch B={self.global_batch}")
        if not self.step_size > 0:
            raise ModelInvariantError(f"step size must be > 0, got {self.step_size}")
        if self.iterations < 0:
            raise ModelInvariantError(f"iterations must be >= 0, got {self.iterations}")

    @property
    def local_batch(self) -> int:
        return self.global_batch // self.n_workers


def parameter_count(dims: Sequence[int]) -> int:
    inputs, hidden, classes = dims
    return inputs * hidden + hidden + hidden * classes + classes


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def make_blobs_dataset(samples: int, num_inputs: int = 2, num_classes: int = 2,
                       separation: float = 4.0, spread: float = 0.5, seed: int = 0) -> ToyDataset:
    """Gaussian blobs with balanced labels; class centers sit on a circle of radius ``separation``"""
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, num_inputs))
    centers[:, 0] = separation * np.cos(angles)
    if num_inputs > 1:
        centers[:, 1] = separation * np.sin(angles)
    labels = np.arange(samples) % num_classes
    features = centers[labels] + rng.normal(0.0, spread, size=(samples, num_inputs))
    order = rng.permutation(samples)
    return ToyDataset(features[order], labels[order], num_classes)


def train_validation_split(dataset: ToyDataset, validation_fraction: float = 0.2,
                           seed: int = 0) -> Tuple[ToyDataset, ToyDataset]:
    if not 0.0 < validation_fraction < 1.0:
        raise ModelInvariantError(f"validation fraction must lie in (0, 1), got {validation_fraction}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = len(dataset) - int(round(len(dataset) * validation_fraction))
    train_idx, val_idx = order[:cut], order[cut:]
    return (ToyDataset(dataset.features[train_idx], dataset.labels[train_idx], dataset.num_classes),
            ToyDataset(dataset.features[val_idx], dataset.labels[val_idx], dataset.num_classes))


def init_model(dims: Tuple[int, int, int], rng: np.random.Generator) -> ModelState:
    inputs, hidden, classes = dims
    w1 = rng.normal(0.0, 1.0 / np.sqrt(inputs), size=(inputs, hidden))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, classes))
    w = np.concatenate([w1.ravel(), np.zeros(hidden), w2.ravel(), np.zeros(classes)])
    return ModelState(w, tuple(dims))


# ---------------------------------------------------------------------------
# Forward / backward and update
# ---------------------------------------------------------------------------

def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict(model: ModelState, features: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = model.unpack()
    return np.argmax(np.tanh(features @ w1 + b1) @ w2 + b2, axis=1)


def forward_backward(model: ModelState, features: np.ndarray, labels: np.ndarray) -> Tuple[float, Gradient]:
    """Mean cross-entropy over the batch and its gradient with respect to every weight"""
    if len(labels) == 0:
        raise ModelInvariantError("batch is empty")
    if not np.all(np.isfinite(features)):
        raise ModelInvariantError("batch features must be finite")

    w1, b1, w2, b2 = model.unpack()
    count = len(labels)
    with np.errstate(over='ignore', invalid='ignore'):
        hidden = np.tanh(features @ w1 + b1)
        log_probs = _log_softmax(hidden @ w2 + b2)
        loss = float(-log_probs[np.arange(count), labels].mean())

        d_logits = np.exp(log_probs)
        d_logits[np.arange(count), labels] -= 1.0
        d_logits /= count
        d_hidden = (d_logits @ w2.T) * (1.0 - hidden ** 2)
        dw = np.concatenate([
            (features.T @ d_hidden).ravel(),
            d_hidden.sum(axis=0),
            (hidden.T @ d_logits).ravel(),
            d_logits.sum(axis=0),
        ])

    if not np.isfinite(loss) or not np.all(np.isfinite(dw)):
        raise NumericDivergenceError("loss or gradient is not finite", iteration=model.t)
    return loss, Gradient(dw)


def sgd_step(model: ModelState, gradient: Gradient, step_size: float) -> ModelState:
    """w <- w - step_size * dw, advancing the iteration counter"""
    if gradient.dw.shape != model.w.shape:
        raise ModelInvariantError(f"gradient of shape {gradient.dw.shape} does not match weights {model.w.shape}")
    with np.errstate(over='ignore', invalid='ignore'):
        w = model.w - step_size * gradient.dw
    if not np.all(np.isfinite(w)):
        raise NumericDivergenceError("weights overflowed in the update", iteration=model.t + 1)
    return ModelState(w, model.dims, model.t + 1)


def accuracy(model: ModelState, dataset: ToyDataset) -> float:
    return float(np.mean(predict(model, dataset.features) == dataset.labels))


def evaluate(model: ModelState, dataset: ToyDataset) -> Dict[str, float]:
    loss, _ = forward_backward(model, dataset.features, dataset.labels)
    return {'loss': loss, 'accuracy': accuracy(model, dataset)}


def max_relative_difference(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale))


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

def _check_dataset(config: SgdConfig, dataset: ToyDataset) -> None:
    if len(dataset) < config.global_batch:
        raise ModelInvariantError(
            f"dataset has {len(dataset)} samples, fewer than the global batch B={config.global_batch}")


def _sharded_gradient(model: ModelState, features: np.ndarray, labels: np.ndarray, n_workers: int,
                      executor: Optional[ThreadPoolExecutor]) -> Tuple[float, Gradient]:
    shards = list(zip(np.array_split(features, n_workers), np.array_split(labels, n_workers)))
    if executor is None:
        results = [forward_backward(model, x, y) for x, y in shards]
    else:
        results = list(executor.map(lambda shard: forward_backward(model, *shard), shards))

    # summed in worker order whatever order the workers finished in
    loss = 0.0
    total = np.zeros_like(model.w)
    for shard_loss, shard_gradient in results:
        loss += shard_loss
        total += shard_gradient.dw
    return loss / n_workers, Gradient(total / n_workers)


def _run(config: SgdConfig, dataset: ToyDataset, n_workers: int, max_workers: Optional[int]) -> ModelState:
    _check_dataset(config, dataset)
    rng = np.random.default_rng(config.seed)
    model = init_model((dataset.num_inputs, config.hidden_units, dataset.num_classes), rng)

    executor = ThreadPoolExecutor(max_workers=max_workers or n_workers) if n_workers > 1 else None
    try:
        for _ in range(config.iterations):
            batch = rng.choice(len(dataset), size=config.global_batch, replace=False)
            loss, gradient = _sharded_gradient(model, dataset.features[batch], dataset.labels[batch],
                                               n_workers, executor)
            model = sgd_step(model, gradient, config.step_size)
            if model.t % 100 == 0:
                logger.debug(f"iteration {model.t}: loss {loss:.6f}")
    finally:
        if executor is not None:
            executor.shutdown()
    return model


def train(config: SgdConfig, dataset: ToyDataset) -> ModelState:
    """
    Sequential mini-batch SGD; a pure function of (config, dataset).

    Args:
        config: Global batch, step size, iteration count, seed and hidden width
        dataset: Training samples; must hold at least one global batch

    Returns:
        Model after ``config.iterations`` updates (the seeded initial model for 0)

    Raises:
        NumericDivergenceError: loss, gradient or weights stop being finite
    """
    model = _run(config, dataset, 1, None)
    logger.info(f"✅ Trained {model.t} iterations at B={config.global_batch}, step {config.step_size}")
    return model


def parallel_train(config: SgdConfig, dataset: ToyDataset, max_workers: Optional[int] = None) -> ModelState:
    """Mini-batch SGD with each batch split over ``config.n_workers`` logical workers"""
    model = _run(config, dataset, config.n_workers, max_workers)
    logger.info(f"✅ Trained {model.t} iterations on {config.n_workers} workers "
                f"(b={config.local_batch}, B={config.global_batch})")
    return model


def batch_step_sweep(train_set: ToyDataset, validation_set: ToyDataset, base_batch: int, base_step: float,
                     base_iterations: int, factors: Sequence[int], seed: int = 0,
                     hidden_units: int = DEFAULT_HIDDEN_UNITS) -> pd.DataFrame:
    """Validation accuracy when batch and step grow by k and iterations shrink by k"""
    for k in factors:
        if k < 1:
            raise ModelInvariantError(f"factor must be >= 1, got {k}")
        if k * base_batch > len(train_set):
            raise ModelInvariantError(f"k={k}: batch {k * base_batch} exceeds the {len(train_set)} training samples")
        if base_iterations % k:
            raise ModelInvariantError(f"k={k} does not divide the iteration count {base_iterations}")

    rows: List[dict] = []
    for k in factors:
        config = SgdConfig(global_batch=k * base_batch, step_size=k * base_step,
                           iterations=base_iterations // k, seed=seed, hidden_units=hidden_units)
        row = {
            'k': k,
            'global_batch': config.global_batch,
            'step_size': config.step_size,
            'iterations': config.iterations,
            'validation_accuracy': float('nan'),
            'diverged': False,
            'error': '',
        }
        try:
            row['validation_accuracy'] = accuracy(train(config, train_set), validation_set)
        except NumericDivergenceError as error:
            logger.warning(f"⚠️ k={k} diverged: {error}")
            row['diverged'] = True
            row['error'] = str(error)
        rows.append(row)

    frame = pd.DataFrame(rows)
    frame.attrs['reference'] = list(LARGE_BATCH_ACCURACY_REFERENCE)
    frame.attrs['note'] = ACCURACY_NOTE
    return frame


__all__ = [
    'DEFAULT_HIDDEN_UNITS',
    'ToyDataset',
    'ModelState',
    'Gradient',
    'SgdConfig',
    'parameter_count',
    'make_blobs_dataset',
    'train_validation_split',
    'init_model',
    'predict',
    'forward_backward',
    'sgd_step',
    'accuracy',
    'evaluate',
    'max_relative_difference',
    'train',
    'parallel_train',
    'batch_step_sweep',
]
