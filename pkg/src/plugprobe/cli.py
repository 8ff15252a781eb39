"""Command-line entry point: dataset generation, experiments, inspection.

Exit codes: 0 success, 1 configuration or usage error, 2 simulation error,
3 I/O error, 4 insufficient samples for the requested protocol.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import ENV_CONFIG_VAR, ToolkitConfig, default_config, load_config
from .dataset import generate, load as load_dataset, save as save_dataset
from .errors import (
    ConfigError,
    CorruptRecord,
    InsufficientSamples,
    NonConvergence,
    PlugProbeError,
    SchemaVersionMismatch,
    SimulationError,
)
from .evaluation import (
    HarnessConfig,
    experiment_e1,
    experiment_e2,
    experiment_e3_omit,
    experiment_e_mot,
    export_report,
    summary_dict,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SIMULATION = 2
EXIT_IO = 3
EXIT_INSUFFICIENT = 4


def _sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _resolve_config(args) -> ToolkitConfig:
    path = args.config or os.environ.get(ENV_CONFIG_VAR)
    cfg = load_config(path) if path else default_config()
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
        cfg.dataset.master_seed = args.seed
    return cfg


def _write_manifest(directory: Path, entries: dict) -> None:
    doc = {"toolkit_version": __version__, **entries}
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _progress_printer(stream):
    def cb(tag, done, total):
        print(f"  {tag}: {done}/{total}", file=stream, flush=True)
    return cb


def cmd_gen(args) -> int:
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        ds = generate(
            cfg.dataset,
            supply=cfg.supply,
            schedule=cfg.schedule,
            jitter=cfg.jitter,
            sample_gap_s=cfg.sample_gap_s,
            power_overrides=cfg.nominal_power_w,
            jobs=args.jobs,
            progress=_progress_printer(sys.stderr) if args.verbose else None,
        )
    except (SimulationError, NonConvergence) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION

    try:
        save_dataset(ds, args.out)
        manifest = {
            "command": "gen",
            "seed": cfg.master_seed,
            "jobs": args.jobs,
            "config_path": args.config or os.environ.get(ENV_CONFIG_VAR),
            "dataset_sha256": _sha256_of(args.out),
            "samples": len(ds),
        }
        with open(str(args.out) + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump({"toolkit_version": __version__, **manifest}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    counts = {}
    for s in ds:
        counts[s.combo_id] = counts.get(s.combo_id, 0) + 1
    for combo_id in sorted(counts):
        print(f"{combo_id}: {counts[combo_id]}")
    print(f"total: {len(ds)} samples -> {args.out}")
    return EXIT_OK


def cmd_exp(args) -> int:
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        ds = load_dataset(args.dataset)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CorruptRecord, SchemaVersionMismatch) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_IO

    runs = args.runs if args.runs is not None else cfg.experiments.runs
    harness = HarnessConfig(net=cfg.net,
                            feature_scale=cfg.resolved_feature_scale(),
                            seed=cfg.master_seed)
    exp = cfg.experiments
    progress = _progress_printer(sys.stderr) if args.verbose else None

    try:
        if args.name == "e1":
            report = experiment_e1(ds, harness, runs,
                                   exp.e1_train_per_combo, exp.e1_test_per_combo,
                                   jobs=args.jobs, progress=progress)
        elif args.name == "e2":
            report = experiment_e2(ds, harness, runs,
                                   exp.e2_singles_train, exp.e2_multi_train,
                                   exp.e2_test_per_combo,
                                   jobs=args.jobs, progress=progress)
        elif args.name == "e3":
            report = experiment_e3_omit(ds, harness, exp.e3_runs_per_combo,
                                        exp.e3_train_per_combo,
                                        jobs=args.jobs, progress=progress)
        elif args.name == "mot":
            report = experiment_e_mot(ds, harness, runs,
                                      exp.mot_singles_train, exp.mot_singles_test,
                                      jobs=args.jobs, progress=progress)
        else:  # argparse choices should prevent this
            print(f"unknown experiment '{args.name}'", file=sys.stderr)
            return EXIT_CONFIG
    except InsufficientSamples as exc:
        print(f"insufficient samples: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (SimulationError, NonConvergence) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        export_report(report, out_dir / f"{args.name}_report.csv", "csv")
        export_report(report, out_dir / f"{args.name}_grid.txt", "grid")
        summary = summary_dict(report)
        with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(out_dir, {
            "command": f"exp {args.name}",
            "dataset_path": str(args.dataset),
            "dataset_sha256": _sha256_of(args.dataset),
            "config_path": args.config or os.environ.get(ENV_CONFIG_VAR),
            "seed": cfg.master_seed,
            "runs": runs,
            "jobs": args.jobs,
        })
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    for key, val in sorted(summary.items()):
        print(f"{key}: {val}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        ds = load_dataset(args.dataset)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CorruptRecord, SchemaVersionMismatch) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_IO

    if not 0 <= args.index < len(ds):
        print(f"index {args.index} out of range (dataset has {len(ds)} samples)",
              file=sys.stderr)
        return EXIT_CONFIG

    sample = ds[args.index]
    print(sample.combo_id)
    for row in sample.matrices.real_power:
        print(",".join(f"{v:.6f}" for v in row))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plugprobe",
        description="Simulated dimmer-probing smart plug: dataset generation, "
                    "multi-load classifier training and evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to the JSON config file "
                                         f"(or ${ENV_CONFIG_VAR})")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes (results are independent of "
                             "this value)")
    common.add_argument("--verbose", action="store_true",
                        help="print progress to stderr")

    p_gen = sub.add_parser("gen", parents=[common],
                           help="generate a labeled dataset file")
    p_gen.add_argument("--out", required=True, help="output dataset path")
    p_gen.set_defaults(func=cmd_gen)

    p_exp = sub.add_parser("exp", parents=[common],
                           help="run an evaluation experiment")
    p_exp.add_argument("name", choices=["e1", "e2", "e3", "mot"],
                       help="which experiment protocol to run")
    p_exp.add_argument("--dataset", required=True, help="dataset file path")
    p_exp.add_argument("--runs", type=int, help="override the run count")
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.set_defaults(func=cmd_exp)

    p_ins = sub.add_parser("inspect",
                           help="print one sample's real-power matrix as CSV")
    p_ins.add_argument("--dataset", required=True, help="dataset file path")
    p_ins.add_argument("--index", type=int, required=True,
                       help="sample index to dump")
    p_ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlugProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION if isinstance(exc, (SimulationError, NonConvergence)) \
            else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
