#!/usr/bin/env python3
"""
File Formats
============

Pydantic schemas for the structured text files the tool reads. Every file is a
JSON document; see README.md for annotated examples.

Features:
- Network documents (``networks/*.net``) using the sgemm table symbols I, O, C, c, P, k
- Device profile documents (``devices/*.json``) with calibration anchors
- Scenario documents (``scenarios/*.json``) tying network, device, cluster and dataset together
- Toy SGD defaults (``scenarios/toy-*.json``)
- Syntax and schema errors reported with file location and field path
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import NetworkParseError

logger = logging.getLogger(__name__)

DocumentT = TypeVar('DocumentT', bound=BaseModel)


class LayerDocument(BaseModel):
    """One layer entry of a network document"""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    name: str = Field(min_length=1)
    kind: str
    input_size: int = Field(alias='I')
    output_size: Optional[int] = Field(default=None, alias='O')
    filters: Optional[int] = Field(default=None, alias='C')
    channels: Optional[int] = Field(default=None, alias='c')
    patch_pixels: Optional[int] = Field(default=None, alias='P')
    kernel: Optional[int] = Field(default=None, alias='k')
    serial_fraction_hint: Optional[float] = None
    bottoms: List[str] = Field(default_factory=list)


class NetworkDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str
    description: str = ""
    default_batch: int
    default_step: float
    iterations_to_convergence: int
    precision_bytes: int = 4
    layers: List[LayerDocument]


class GemmCurveDocument(BaseModel):
    """Either a power law below ``saturation_m`` or an explicit (m, efficiency) table"""
    model_config = ConfigDict(extra='forbid')

    saturation_m: Optional[int] = None
    exponent: float = 0.5
    points: Optional[List[Tuple[int, float]]] = None


class LayerEfficiencyDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    pattern: str
    efficiency: float


class AnchorDocument(BaseModel):
    """Measured seconds per iteration for a network file at a batch size"""
    model_config = ConfigDict(extra='forbid')

    network: str
    batch: int
    seconds: float


class DeviceDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str
    description: str = ""
    effective_flops: float
    per_kind_efficiency: Dict[str, float] = Field(default_factory=dict)
    per_layer_efficiency: List[LayerEfficiencyDocument] = Field(default_factory=list)
    gemm_curve: GemmCurveDocument
    fixed_layer_latency: float = 0.0
    anchors: List[AnchorDocument] = Field(default_factory=list)
    # provenance block written by the calibrate command
    manifest: Optional[Dict[str, Any]] = Field(default=None, alias='_manifest')


class ClusterDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    link_bandwidth: float
    bandwidth_efficiency: float = 0.5
    link_latency: float = 0.0
    scheme: str = "BinaryTree"


class DatasetDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    total_bytes: float
    sample_count: int
    epochs_to_convergence: int
    storage: str = "NodeLocal"
    fs_metadata_latency: float = 0.0


class LargeBatchPolicyDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    factors: List[int]
    step_rule: str = "linear"
    iteration_rule: str = "divide"
    free_communication: bool = True


class ScenarioDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str
    description: str = ""
    network: str
    device: str
    cluster: ClusterDocument
    dataset: DatasetDocument
    n_list: List[int]
    global_batch: Optional[int] = None
    reduction_factor: float = 1.0
    backward_multiplier: float = 2.0
    overlap_mode: str = "PerLayer"
    large_batch_policy: Optional[LargeBatchPolicyDocument] = None



class ToyTrainingDocument(BaseModel):
    """Defaults for the toy SGD runs (blob dataset, model size, SGD settings)"""
    model_config = ConfigDict(extra='forbid')

    samples: int = 1024
    num_inputs: int = 2
    num_classes: int = 2
    separation: float = 4.0
    spread: float = 0.5
    validation_fraction: float = 0.2
    hidden_units: int = 16
    global_batch: int = 32
    step_size: float = 0.1
    iterations: int = 500
    n_workers: int = 1
    seed: int = 0
    sweep_factors: List[int] = Field(default_factory=list)

def parse_document(text: str, model_cls: Type[DocumentT], location: str = "<document>") -> DocumentT:
    """Parse JSON text into a schema model, wrapping failures with their location"""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as error:
        raise NetworkParseError(f"syntax error: {error.msg}", f"{location}:{error.lineno}:{error.colno}")

    try:
        return model_cls.model_validate(raw)
    except ValidationError as error:
        first = error.errors()[0]
        field_path = ".".join(str(part) for part in first['loc'])
        raise NetworkParseError(f"field {field_path}: {first['msg']}", location)


def read_document(path: Path, model_cls: Type[DocumentT]) -> DocumentT:
    """Read and validate a structured text file"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as error:
        raise NetworkParseError(f"cannot read file: {error.strerror}", str(path))
    except UnicodeDecodeError as error:
        raise NetworkParseError(f"not UTF-8 text: byte {error.start}: {error.reason}", str(path))
    document = parse_document(text, model_cls, str(path))
    logger.debug(f"Parsed {model_cls.__name__} from {path}")
    return document


__all__ = [
    'LayerDocument',
    'NetworkDocument',
    'GemmCurveDocument',
    'LayerEfficiencyDocument',
    'AnchorDocument',
    'DeviceDocument',
    'ClusterDocument',
    'DatasetDocument',
    'LargeBatchPolicyDocument',
    'ScenarioDocument',
    'ToyTrainingDocument',
    'parse_document',
    'read_document',
]
