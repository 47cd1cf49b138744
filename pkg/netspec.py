#!/usr/bin/env python3
"""
Network Specifications
======================

Parses layer-level network descriptions and derives the static quantities every
other model reads: parameter counts, model bytes, per-layer FLOPs and the sgemm
shapes a forward pass executes.

Features:
- Layer kinds: FullyConnected, Convolutional, Pooling, LRN, Dropout, ReLU,
  Softmax plus Data, Concat and Accuracy for complete Caffe-style graphs
- I/O chaining validation, including named ``bottoms`` for branching graphs
- GEMM shapes per layer: FC (b, I, O) x1, Conv (C, c*k^2, Z) xb, Softmax (I, 1, 1) xb
- Effective conv output size Z = (sqrt(P) - floor(k/2))^2
- FLOPs per iteration with a configurable backward multiplier
- Summary rows: layer counts, weights, model size and FLOPs to convergence

Usage:
    net = load_network("networks/alexnet.net")
    print(param_count(net), model_bytes(net))
"""

import logging
import math
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from errors import ModelInvariantError
from file_formats import LayerDocument, NetworkDocument, parse_document, read_document

logger = logging.getLogger(__name__)

DEFAULT_BACKWARD_MULTIPLIER = 2.0
DEFAULT_LRN_LOCAL_SIZE = 5
VALID_PRECISION_BYTES = (1, 2, 4, 8)


class LayerKind(Enum):
    """Layer types understood by the FLOP and time models"""
    FULLY_CONNECTED = "FullyConnected"
    CONVOLUTIONAL = "Convolutional"
    POOLING = "Pooling"
    LRN = "LRN"
    DROPOUT = "Dropout"
    RELU = "ReLU"
    SOFTMAX = "Softmax"
    DATA = "Data"
    CONCAT = "Concat"
    ACCURACY = "Accuracy"


class Direction(Enum):
    FORWARD = "forward"
    FORWARD_BACKWARD = "forward+backward"


GEMM_KINDS = (LayerKind.FULLY_CONNECTED, LayerKind.CONVOLUTIONAL, LayerKind.SOFTMAX)


@dataclass(frozen=True)
class LayerSpec:
    """One layer; size fields follow the sgemm table symbols"""
    name: str
    kind: LayerKind
    input_size: int                      # I
    output_size: Optional[int] = None    # O (FC, optionally Pooling)
    filters: Optional[int] = None        # C
    channels: Optional[int] = None       # c
    patch_pixels: Optional[int] = None   # P
    kernel: Optional[int] = None         # k (LRN: local size)
    serial_fraction_hint: Optional[float] = None
    bottoms: Tuple[str, ...] = ()

    @property
    def output_elements(self) -> int:
        """Elements this layer hands to the next one"""
        if self.kind == LayerKind.FULLY_CONNECTED:
            return self.output_size
        if self.kind == LayerKind.CONVOLUTIONAL:
            return self.filters * conv_effective_size(self.patch_pixels, self.kernel)
        if self.kind == LayerKind.POOLING and self.output_size is not None:
            return self.output_size
        return self.input_size

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['kind'] = self.kind.value
        data['bottoms'] = list(self.bottoms)
        return data


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: Tuple[LayerSpec, ...]
    default_batch: int
    default_step: float
    iterations_to_convergence: int
    precision_bytes: int = 4
    description: str = ""

    def count(self, kind: LayerKind) -> int:
        return sum(1 for layer in self.layers if layer.kind == kind)

    @property
    def serial_fraction(self) -> Optional[float]:
        """Sum of the layers' serial-fraction hints, None when no layer carries one"""
        hints = [layer.serial_fraction_hint for layer in self.layers if layer.serial_fraction_hint is not None]
        return sum(hints) if hints else None


@dataclass(frozen=True)
class GemmShape:
    m: int
    k_dim: int
    n_dim: int
    count: int = 1

    def __post_init__(self):
        for name in ('m', 'k_dim', 'n_dim', 'count'):
            if getattr(self, name) < 1:
                raise ModelInvariantError(f"GEMM {name} must be >= 1, got {getattr(self, name)}")

    @property
    def flops(self) -> int:
        return 2 * self.m * self.k_dim * self.n_dim * self.count


def conv_effective_size(patch_pixels: int, kernel: int) -> int:
    """Z = (sqrt(P) - floor(k/2))^2, exactly as the sgemm table prints it"""
    if kernel < 1:
        raise ModelInvariantError(f"kernel size must be >= 1, got {kernel}")
    if patch_pixels < 1:
        raise ModelInvariantError(f"patch size must be >= 1, got {patch_pixels}")
    side = math.isqrt(patch_pixels)
    if side * side != patch_pixels:
        raise ModelInvariantError(f"patch size P={patch_pixels} is not a perfect square")
    base = side - kernel // 2
    if base <= 0:
        raise ModelInvariantError(f"kernel k={kernel} too large for patch P={patch_pixels}")
    return base * base


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = {
    LayerKind.FULLY_CONNECTED: ('output_size',),
    LayerKind.CONVOLUTIONAL: ('filters', 'channels', 'patch_pixels', 'kernel'),
    LayerKind.POOLING: ('kernel',),
}

_SIZE_FIELDS = ('input_size', 'output_size', 'filters', 'channels', 'patch_pixels', 'kernel')


def _layer_from_document(doc: LayerDocument) -> LayerSpec:
    try:
        kind = LayerKind(doc.kind)
    except ValueError:
        valid = ", ".join(k.value for k in LayerKind)
        raise ModelInvariantError(f"field kind: unknown layer kind {doc.kind!r} (expected one of {valid})", doc.name)

    layer = LayerSpec(
        name=doc.name,
        kind=kind,
        input_size=doc.input_size,
        output_size=doc.output_size,
        filters=doc.filters,
        channels=doc.channels,
        patch_pixels=doc.patch_pixels,
        kernel=doc.kernel,
        serial_fraction_hint=doc.serial_fraction_hint,
        bottoms=tuple(doc.bottoms),
    )
    _validate_layer(layer)
    return layer


def _validate_layer(layer: LayerSpec) -> None:
    for name in _SIZE_FIELDS:
        value = getattr(layer, name)
        if value is not None and value < 1:
            raise ModelInvariantError(f"field {name} must be strictly positive, got {value}", layer.name)

    for name in _REQUIRED_FIELDS.get(layer.kind, ()):
        if getattr(layer, name) is None:
            raise ModelInvariantError(f"field {name} is required for {layer.kind.value} layers", layer.name)

    if layer.kind == LayerKind.CONVOLUTIONAL:
        if layer.kernel % 2 == 0:
            raise ModelInvariantError(f"field kernel must be odd, got {layer.kernel}", layer.name)
        try:
            conv_effective_size(layer.patch_pixels, layer.kernel)
        except ModelInvariantError as error:
            raise ModelInvariantError(f"field patch_pixels: {error}", layer.name)

    if layer.kind == LayerKind.CONCAT and len(layer.bottoms) < 2:
        raise ModelInvariantError("field bottoms: Concat needs at least two inputs", layer.name)
    if layer.kind != LayerKind.CONCAT and len(layer.bottoms) > 1:
        raise ModelInvariantError("field bottoms: only Concat layers take several inputs", layer.name)

    hint = layer.serial_fraction_hint
    if hint is not None and not 0.0 <= hint <= 1.0:
        raise ModelInvariantError(f"field serial_fraction_hint must lie in [0, 1], got {hint}", layer.name)


def _validate_chaining(layers: Tuple[LayerSpec, ...]) -> None:
    produced: Dict[str, int] = {}
    previous: Optional[LayerSpec] = None

    for layer in layers:
        if layer.name in produced:
            raise ModelInvariantError("field name: duplicate layer name", layer.name)

        if previous is not None:
            sources = layer.bottoms or (previous.name,)
            for source in sources:
                if source not in produced:
                    raise ModelInvariantError(f"field bottoms: unknown or later layer {source!r}", layer.name)
            expected = sum(produced[source] for source in sources)
            if layer.input_size != expected:
                raise ModelInvariantError(
                    f"field input_size: I={layer.input_size} does not match upstream output {expected} "
                    f"from {', '.join(sources)}",
                    layer.name,
                )
        elif layer.bottoms:
            raise ModelInvariantError("field bottoms: first layer cannot reference inputs", layer.name)

        produced[layer.name] = layer.output_elements
        previous = layer


def build_network(document: NetworkDocument) -> NetworkSpec:
    """Validate a parsed document and turn it into a NetworkSpec"""
    if not document.layers:
        raise ModelInvariantError("network must contain at least one layer", document.name)
    if document.default_batch < 1:
        raise ModelInvariantError(f"default_batch must be >= 1, got {document.default_batch}", document.name)
    if document.precision_bytes not in VALID_PRECISION_BYTES:
        raise ModelInvariantError(
            f"precision_bytes must be one of {VALID_PRECISION_BYTES}, got {document.precision_bytes}", document.name
        )
    if document.default_step <= 0:
        raise ModelInvariantError(f"default_step must be > 0, got {document.default_step}", document.name)
    if document.iterations_to_convergence < 0:
        raise ModelInvariantError("iterations_to_convergence must be >= 0", document.name)

    layers = tuple(_layer_from_document(doc) for doc in document.layers)
    _validate_chaining(layers)

    return NetworkSpec(
        name=document.name,
        layers=layers,
        default_batch=document.default_batch,
        default_step=document.default_step,
        iterations_to_convergence=document.iterations_to_convergence,
        precision_bytes=document.precision_bytes,
        description=document.description,
    )


def parse_network(text: str, location: str = "<network>") -> NetworkSpec:
    """Parse a network document; syntax and invariant errors name their location"""
    document = parse_document(text, NetworkDocument, location)
    try:
        return build_network(document)
    except ModelInvariantError as error:
        raise ModelInvariantError(str(error), location)


def load_network(path: Path) -> NetworkSpec:
    path = Path(path)
    document = read_document(path, NetworkDocument)
    try:
        net = build_network(document)
    except ModelInvariantError as error:
        raise ModelInvariantError(str(error), str(path))
    logger.info(f"✅ Loaded network {net.name}: {len(net.layers)} layers from {path}")
    return net


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------

def gemm_shapes(layer: LayerSpec, b: int) -> List[GemmShape]:
    """sgemm calls of one forward pass through ``layer`` at local batch ``b``"""
    if b < 1:
        raise ModelInvariantError(f"batch size must be >= 1, got {b}", layer.name)

    if layer.kind == LayerKind.FULLY_CONNECTED:
        return [GemmShape(b, layer.input_size, layer.output_size, 1)]
    if layer.kind == LayerKind.CONVOLUTIONAL:
        receptive_field = layer.channels * layer.kernel * layer.kernel
        z = conv_effective_size(layer.patch_pixels, layer.kernel)
        return [GemmShape(layer.filters, receptive_field, z, b)]
    if layer.kind == LayerKind.SOFTMAX:
        return [GemmShape(layer.input_size, 1, 1, b)]
    return []


def element_flops(layer: LayerSpec, b: int) -> int:
    """Element-wise forward FLOPs of a non-GEMM layer (0 for GEMM layers)"""
    if layer.kind in GEMM_KINDS:
        return 0
    if layer.kind == LayerKind.POOLING:
        return layer.output_elements * layer.kernel * layer.kernel * b
    if layer.kind == LayerKind.LRN:
        local_size = layer.kernel or DEFAULT_LRN_LOCAL_SIZE
        return 3 * local_size * layer.input_size * b
    return layer.input_size * b


def layer_flops(layer: LayerSpec, b: int, direction: Direction = Direction.FORWARD,
                backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> float:
    forward = sum(shape.flops for shape in gemm_shapes(layer, b)) + element_flops(layer, b)
    if direction == Direction.FORWARD:
        return float(forward)
    return forward * (1.0 + backward_multiplier)


def flops_per_iteration(net: NetworkSpec, b: int, direction: Direction = Direction.FORWARD_BACKWARD,
                        backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> float:
    """Total FLOPs of one iteration at local batch ``b``; linear in b"""
    if b < 1:
        raise ModelInvariantError(f"batch size must be >= 1, got {b}", net.name)
    return sum(layer_flops(layer, b, direction, backward_multiplier) for layer in net.layers)


def layer_param_count(layer: LayerSpec) -> int:
    if layer.kind == LayerKind.FULLY_CONNECTED:
        return layer.input_size * layer.output_size + layer.output_size
    if layer.kind == LayerKind.CONVOLUTIONAL:
        return layer.filters * layer.channels * layer.kernel * layer.kernel + layer.filters
    return 0


def param_count(net: NetworkSpec) -> int:
    """All trainable weights, biases included"""
    return sum(layer_param_count(layer) for layer in net.layers)


def fc_param_count(net: NetworkSpec) -> int:
    return sum(layer_param_count(layer) for layer in net.layers if layer.kind == LayerKind.FULLY_CONNECTED)


def model_bytes(net: NetworkSpec, reduction_factor: float = 1.0) -> float:
    """Bytes exchanged per model/gradient copy after an optional size reduction"""
    if reduction_factor < 1:
        raise ModelInvariantError(f"reduction_factor must be >= 1, got {reduction_factor}", net.name)
    return param_count(net) * net.precision_bytes / reduction_factor


def layer_bytes(layer: LayerSpec, precision_bytes: int, reduction_factor: float = 1.0) -> float:
    return layer_param_count(layer) * precision_bytes / reduction_factor


def summarize_network(net: NetworkSpec, b: Optional[int] = None,
                      backward_multiplier: float = DEFAULT_BACKWARD_MULTIPLIER) -> Dict[str, Any]:
    """One row of network properties in the style of the networks table"""
    batch = b or net.default_batch
    iteration_flops = flops_per_iteration(net, batch, Direction.FORWARD_BACKWARD, backward_multiplier)
    return {
        'network': net.name,
        'layers': len(net.layers),
        'conv_layers': net.count(LayerKind.CONVOLUTIONAL),
        'fc_layers': net.count(LayerKind.FULLY_CONNECTED),
        'fc_weights': fc_param_count(net),
        'total_weights': param_count(net),
        'model_mb': model_bytes(net) / 1e6,
        'batch': batch,
        'step_size': net.default_step,
        'iterations': net.iterations_to_convergence,
        'flops_per_iteration': iteration_flops,
        'exaflop_to_convergence': iteration_flops * net.iterations_to_convergence / 1e18,
        'serial_fraction': net.serial_fraction,
    }


def layer_table(net: NetworkSpec, b: Optional[int] = None) -> List[Dict[str, Any]]:
    """Per-layer sizes, weights and forward FLOPs"""
    batch = b or net.default_batch
    rows = []
    for layer in net.layers:
        shapes = gemm_shapes(layer, batch)
        rows.append({
            'layer': layer.name,
            'kind': layer.kind.value,
            'input_size': layer.input_size,
            'output_size': layer.output_elements,
            'weights': layer_param_count(layer),
            'gemm': "; ".join(f"{s.m}x{s.k_dim}x{s.n_dim}*{s.count}" for s in shapes),
            'forward_flops': layer_flops(layer, batch),
        })
    return rows


__all__ = [
    'LayerKind',
    'Direction',
    'LayerSpec',
    'NetworkSpec',
    'GemmShape',
    'conv_effective_size',
    'build_network',
    'parse_network',
    'load_network',
    'gemm_shapes',
    'element_flops',
    'layer_flops',
    'flops_per_iteration',
    'layer_param_count',
    'param_count',
    'fc_param_count',
    'model_bytes',
    'layer_bytes',
    'summarize_network',
    'layer_table',
]
