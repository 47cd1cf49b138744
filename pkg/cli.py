#!/usr/bin/env python3
"""
DNN Scaling Command Line
========================

Single entry point over the shipped network, device and scenario files.

Subcommands:
- analyze:    static network properties (layers, weights, model size, FLOPs)
- simulate:   strong-scaling report for a scenario (report.csv + series files)
- sweep:      large-batch trade-off table for a scenario
- calibrate:  fit a device profile to measured iteration times
- train-toy:  toy data-parallel SGD runs and batch/step sweeps

Exit codes: 0 success, 1 usage or config error, 2 model invariant violation,
3 numeric divergence.

Usage:
    dnn-scaling analyze --network networks/alexnet.net
    dnn-scaling simulate --scenario scenarios/alexnet-k80-fdr.json --out results
    dnn-scaling train-toy --workers 4 --seed 3
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import pandas as pd

from config import VALID_LOG_LEVELS, Settings, load_settings
from errors import ConfigError, ModelInvariantError, NumericDivergenceError
from file_formats import ToyTrainingDocument, read_document
from netspec import layer_table, load_network, summarize_network
from perfmodel import (
    CalibrationAnchor,
    calibrate,
    kind_time_shares,
    layer_time_breakdown,
    load_calibrated_profile,
    load_device_profile,
)
from report_writer import RunManifest, ReportWriter
from scalesim import LargeBatchPolicy, Scenario, large_batch_tradeoff, load_scenario, simulate
from sgdcore import (
    SgdConfig,
    accuracy,
    batch_step_sweep,
    evaluate,
    make_blobs_dataset,
    parallel_train,
    train_validation_split,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_DIVERGENCE = 3

LOG_FILE_NAME = "dnn_scaling.log"
TOY_DEFAULTS_FILE = "toy-blobs.json"


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they share exit code 1"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}")
    if not values:
        raise ConfigError("integer list is empty")
    return values


def _parse_anchor(text: str, networks_dir: Path) -> CalibrationAnchor:
    """NET:B:SECONDS, NET being a network file (absolute or under networks/)"""
    parts = text.rsplit(':', 2)
    if len(parts) != 3:
        raise ConfigError(f"anchor must look like NET:B:SECONDS, got {text!r}")
    net_path = Path(parts[0])
    if not net_path.is_absolute() and not net_path.exists():
        net_path = networks_dir / net_path
    try:
        batch, seconds = int(parts[1]), float(parts[2])
    except ValueError:
        raise ConfigError(f"anchor batch and seconds must be numbers, got {text!r}")
    return CalibrationAnchor(load_network(net_path), batch, seconds)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="dnn-scaling",
                             description="Performance model of data-parallel DNN training")
    parser.add_argument('--out', type=Path, help="output directory (default: DNN_SCALING_OUTPUT_DIR)")
    parser.add_argument('--env-file', help="dotenv file to load before reading settings")
    parser.add_argument('--log-level', help="override DNN_SCALING_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest='command', required=True)

    analyze = subparsers.add_parser('analyze', help="static properties of a network")
    analyze.add_argument('--network', type=Path, required=True)
    analyze.add_argument('--batch', type=int, help="global batch (default: the network's)")
    analyze.add_argument('--device', type=Path, help="also break compute time down per layer on this device")

    for name, text in (('simulate', "strong-scaling report"), ('sweep', "large-batch trade-off")):
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument('--scenario', type=Path, required=True)
        sub.add_argument('--network', type=Path, help="replace the scenario's network")
        sub.add_argument('--device', type=Path, help="replace the scenario's device profile")
        sub.add_argument('--n-list', type=_int_list, help="comma-separated node counts")
        sub.add_argument('--reduction-factor', type=float)
        if name == 'sweep':
            sub.add_argument('--factors', type=_int_list, help="batch enlargement factors, powers of two")
            sub.add_argument('--with-communication', action='store_true',
                             help="use full simulated iterations instead of free communication")

    calib = subparsers.add_parser('calibrate', help="fit a device profile to measured iteration times")
    calib.add_argument('--device', type=Path, required=True)
    calib.add_argument('--anchor', action='append', default=[], metavar='NET:B:SECONDS',
                       help="measured seconds per iteration; repeatable (default: the anchors in the file)")

    toy = subparsers.add_parser('train-toy', help="toy data-parallel SGD")
    toy.add_argument('--config', type=Path, help=f"toy defaults file (default: scenarios/{TOY_DEFAULTS_FILE})")
    toy.add_argument('--seed', type=int)
    toy.add_argument('--workers', type=int)
    toy.add_argument('--batch', type=int)
    toy.add_argument('--step', type=float)
    toy.add_argument('--iterations', type=int)
    toy.add_argument('--sweep', type=_int_list, help="batch/step factors k, e.g. 1,2,4,8")
    return parser


def _configure_logging(level: str, output_dir: Path) -> None:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise ConfigError(f"cannot create output directory {output_dir}: {error.strerror}")
    logging.basicConfig(
        level=getattr(logging, level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr),
            logging.FileHandler(output_dir / LOG_FILE_NAME, encoding='utf-8'),
        ],
        force=True,
    )


def _scenario_with_overrides(args: argparse.Namespace, settings: Settings) -> Scenario:
    scenario = load_scenario(args.scenario, settings.data_dir)
    changes = {}
    if args.network:
        network = load_network(args.network)
        changes.update(network=network, global_batch=network.default_batch)
    if args.device:
        changes['device'] = load_calibrated_profile(args.device, settings.networks_dir)
    if args.n_list:
        changes['n_list'] = tuple(sorted(set(args.n_list)))
    if args.reduction_factor is not None:
        changes['reduction_factor'] = args.reduction_factor
    # applied together: a new network may only fit the new node list
    return replace(scenario, **changes) if changes else scenario


def _manifest(args: argparse.Namespace, inputs: Sequence[Optional[Path]], output_dir: Path,
              seed: Optional[int] = None, **parameters) -> RunManifest:
    return RunManifest(
        subcommand=args.command,
        inputs=tuple(str(path) for path in inputs if path),
        output_dir=str(output_dir),
        seed=seed,
        parameters={key: value for key, value in parameters.items() if value is not None},
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def run_analyze(args: argparse.Namespace, settings: Settings, output_dir: Path) -> int:
    net = load_network(args.network)
    summary = summarize_network(net, args.batch)
    writer = ReportWriter(output_dir, _manifest(args, [args.network, args.device], output_dir, batch=args.batch))

    print(f"📊 {net.name}")
    for key, value in summary.items():
        print(f"  {key:24s} {value}")
    writer.write_csv('network_summary.csv', pd.DataFrame([summary]))
    writer.write_csv('layers.csv', pd.DataFrame(layer_table(net, args.batch)))

    if args.device:
        device = load_calibrated_profile(args.device, settings.networks_dir)
        batch = args.batch or net.default_batch
        writer.write_csv('layer_times.csv', layer_time_breakdown(net, batch, device))
        for kind, share in kind_time_shares(net, batch, device).items():
            print(f"  {kind:24s} {share:.1%} of compute")
    return EXIT_OK


def run_simulate(args: argparse.Namespace, settings: Settings, output_dir: Path) -> int:
    scenario = _scenario_with_overrides(args, settings)
    report = simulate(scenario, settings.max_workers)
    manifest = _manifest(args, [args.scenario, args.network, args.device], output_dir,
                         n_list=",".join(str(n) for n in scenario.n_list),
                         reduction_factor=scenario.reduction_factor)
    writer = ReportWriter(output_dir, manifest)
    writer.write_csv('report.csv', report.to_dataframe())
    writer.write_series('speedup.series', report.speedup_series())
    writer.write_series('timeline.series', report.timeline_series())
    if report.serial_fraction is not None:
        writer.write_series('amdahl.series', report.amdahl_series())
    print(report.to_table())
    return EXIT_OK


def run_sweep(args: argparse.Namespace, settings: Settings, output_dir: Path) -> int:
    scenario = _scenario_with_overrides(args, settings)
    policy = scenario.large_batch_policy or LargeBatchPolicy(factors=(1,))
    if args.factors:
        policy = replace(policy, factors=tuple(args.factors))
    if args.with_communication:
        policy = replace(policy, free_communication=False)

    result = large_batch_tradeoff(scenario, policy, settings.max_workers)
    manifest = _manifest(args, [args.scenario, args.network, args.device], output_dir,
                         factors=",".join(str(k) for k in policy.factors),
                         free_communication=policy.free_communication, note=result.note)
    writer = ReportWriter(output_dir, manifest)
    frame = result.to_dataframe()
    writer.write_csv('large_batch.csv', frame)
    print(frame.to_string(index=False))
    return EXIT_OK


def run_calibrate(args: argparse.Namespace, settings: Settings, output_dir: Path) -> int:
    device = load_device_profile(args.device, settings.networks_dir)
    anchors = [_parse_anchor(text, settings.networks_dir) for text in args.anchor] or list(device.anchors)
    if not anchors:
        raise ConfigError(f"{args.device}: no anchors in the file and none given with --anchor")
    calibrated = calibrate(device, anchors)

    writer = ReportWriter(output_dir, _manifest(args, [args.device], output_dir,
                                                anchors=";".join(args.anchor) or None))
    # anchors are folded into effective_flops, so the written profile carries none
    path = writer.write_json(f"{Path(args.device).stem}.calibrated.json", calibrated.to_dict())
    print(f"✅ {calibrated.name}: effective_flops {device.effective_flops:.4e} -> "
          f"{calibrated.effective_flops:.4e} ({path})")
    return EXIT_OK


def run_train_toy(args: argparse.Namespace, settings: Settings, output_dir: Path) -> int:
    config_path = args.config or settings.scenarios_dir / TOY_DEFAULTS_FILE
    defaults = read_document(config_path, ToyTrainingDocument)
    seed = defaults.seed if args.seed is None else args.seed
    dataset = make_blobs_dataset(defaults.samples, defaults.num_inputs, defaults.num_classes,
                                 defaults.separation, defaults.spread, seed)
    train_set, validation_set = train_validation_split(dataset, defaults.validation_fraction, seed)

    config = SgdConfig(
        global_batch=args.batch or defaults.global_batch,
        step_size=args.step or defaults.step_size,
        iterations=defaults.iterations if args.iterations is None else args.iterations,
        n_workers=args.workers or defaults.n_workers,
        seed=seed,
        hidden_units=defaults.hidden_units,
    )
    writer = ReportWriter(output_dir, _manifest(args, [config_path], output_dir, seed=seed,
                                                workers=config.n_workers, batch=config.global_batch,
                                                step=config.step_size, iterations=config.iterations))

    metrics = {
        'workers': config.n_workers,
        'global_batch': config.global_batch,
        'step_size': config.step_size,
        'iterations': config.iterations,
        'train_loss': float('nan'),
        'train_accuracy': float('nan'),
        'validation_accuracy': float('nan'),
        'diverged': False,
        'error': '',
    }
    try:
        model = parallel_train(config, train_set, settings.max_workers)
        train_metrics = evaluate(model, train_set)
        metrics.update(train_loss=train_metrics['loss'], train_accuracy=train_metrics['accuracy'],
                       validation_accuracy=accuracy(model, validation_set))
        writer.write_csv('weights.csv', pd.DataFrame({'index': range(len(model.w)), 'weight': model.w}))
    except NumericDivergenceError as error:
        # a diverged run is a result, not a failure of the tool
        logger.error(f"❌ Training diverged: {error}")
        metrics.update(diverged=True, error=str(error))
    writer.write_csv('train_metrics.csv', pd.DataFrame([metrics]))
    print(pd.DataFrame([metrics]).to_string(index=False))

    factors = args.sweep or defaults.sweep_factors
    if factors:
        sweep = batch_step_sweep(train_set, validation_set, config.global_batch, config.step_size,
                                 config.iterations, factors, seed, defaults.hidden_units)
        writer.write_csv('sweep.csv', sweep)
        print(sweep.to_string(index=False))
    return EXIT_OK


COMMANDS = {
    'analyze': run_analyze,
    'simulate': run_simulate,
    'sweep': run_sweep,
    'calibrate': run_calibrate,
    'train-toy': run_train_toy,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings = load_settings(args.env_file)
        if args.log_level:
            if args.log_level.upper() not in VALID_LOG_LEVELS:
                raise ConfigError(f"--log-level must be one of {VALID_LOG_LEVELS}, got {args.log_level!r}")
            settings = replace(settings, log_level=args.log_level.upper())
        output_dir = args.out or settings.output_dir
        _configure_logging(settings.log_level, output_dir)
        logger.info(f"🚀 dnn-scaling {args.command}")
        return COMMANDS[args.command](args, settings, output_dir)
    except ConfigError as error:
        logger.error(f"❌ {error}")
        return EXIT_CONFIG
    except ModelInvariantError as error:
        logger.error(f"❌ {error}")
        return EXIT_INVARIANT
    except NumericDivergenceError as error:
        logger.error(f"❌ {error}")
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
