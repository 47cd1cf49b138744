#!/usr/bin/env python3
"""
Report Writer
=============

Writes model outputs to an output directory. Every file starts with the run
manifest as ``#`` comment lines, so a report can be traced back to the command
and inputs that produced it. Content carries no timestamps: re-running the
same manifest reproduces the same bytes.

Features:
- CSV reports from pandas DataFrames (comma separated, header row)
- Series files with whitespace-separated (x, y) columns, one block per curve
- JSON documents (calibrated device profiles, manifests)
"""

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from errors import ConfigError

logger = logging.getLogger(__name__)

TOOL_NAME = "dnn-scaling"
TOOL_VERSION = "0.1.0"

Series = Sequence[Tuple[str, Sequence[Tuple[float, float]]]]


@dataclass(frozen=True)
class RunManifest:
    """What produced an output file"""
    subcommand: str
    inputs: Tuple[str, ...]
    output_dir: str
    seed: Optional[int] = None
    parameters: Dict[str, Any] = field(default_factory=dict)
    tool_version: str = TOOL_VERSION

    def header_lines(self) -> List[str]:
        lines = [
            f"# tool: {TOOL_NAME} {self.tool_version}",
            f"# subcommand: {self.subcommand}",
            f"# inputs: {', '.join(self.inputs) if self.inputs else '-'}",
            f"# seed: {self.seed if self.seed is not None else '-'}",
            f"# output_dir: {self.output_dir}",
        ]
        for key in sorted(self.parameters):
            lines.append(f"# {key}: {self.parameters[key]}")
        return lines

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['inputs'] = list(self.inputs)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class ReportWriter:
    """Writes report files under one output directory"""

    def __init__(self, output_dir: Path, manifest: RunManifest):
        self.output_dir = Path(output_dir)
        self.manifest = manifest
        self.written: List[Path] = []
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as error:
            raise ConfigError(f"cannot create output directory {self.output_dir}: {error.strerror}")

    def _write(self, name: str, body: str) -> Path:
        path = self.output_dir / name
        text = "\n".join(self.manifest.header_lines()) + "\n" + body
        try:
            path.write_text(text, encoding='utf-8')
        except OSError as error:
            raise ConfigError(f"cannot write {path}: {error.strerror}")
        self.written.append(path)
        logger.info(f"💾 Wrote {path}")
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Write a DataFrame as CSV below the manifest header.

        Args:
            name: File name inside the output directory
            frame: Report rows; the index is not written

        Returns:
            Path of the written file
        """
        return self._write(name, frame.to_csv(index=False, lineterminator="\n"))

    def write_series(self, name: str, series: Series) -> Path:
        """Write curves as blocks of ``x y`` lines, each preceded by ``# <label>``"""
        blocks = []
        for label, points in series:
            lines = [f"# {label}"] + [f"{x:.10g} {y:.10g}" for x, y in points]
            blocks.append("\n".join(lines))
        return self._write(name, "\n\n".join(blocks) + "\n")

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """JSON has no comment syntax, so the manifest goes in a ``_manifest`` key instead"""
        path = self.output_dir / name
        document = dict(payload)
        document['_manifest'] = self.manifest.to_dict()
        try:
            path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding='utf-8')
        except OSError as error:
            raise ConfigError(f"cannot write {path}: {error.strerror}")
        self.written.append(path)
        logger.info(f"💾 Wrote {path}")
        return path


def read_report_csv(path: Path) -> pd.DataFrame:
    """Read a CSV written by ReportWriter, skipping the manifest header"""
    return pd.read_csv(path, comment='#')


def read_series(path: Path) -> Dict[str, List[Tuple[float, float]]]:
    """Parse a series file back into {label: [(x, y), ...]}"""
    curves: Dict[str, List[Tuple[float, float]]] = {}
    label = None
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        line = line.strip()
        if not line:
            label = None
            continue
        if line.startswith('#'):
            # manifest lines carry "key: value"; block labels do not
            if ':' not in line:
                label = line[1:].strip()
                curves[label] = []
            continue
        if label is not None:
            x, y = line.split()
            curves[label].append((float(x), float(y)))
    return curves


__all__ = [
    'TOOL_NAME',
    'TOOL_VERSION',
    'RunManifest',
    'ReportWriter',
    'read_report_csv',
    'read_series',
]
