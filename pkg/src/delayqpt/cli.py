"""``qpt`` command-line front end.

Exit codes: 0 success, 2 configuration error, 3 optimization failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import InvalidArgument, OptimizationFailure, QPTError
from .experiments import (
    PRESETS,
    ConfigError,
    TrialData,
    aggregate_histories,
    aggregate_summary,
    reconstruct_trial,
    resolve_config,
    run_trials,
    simulate_trial,
    summary_csv,
    table_csv,
)
from .report import ReconstructionReport

EXIT_OK, EXIT_CONFIG, EXIT_OPTIM = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--preset", help="named preset (see `qpt presets list`)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="number of trials")
    p.add_argument("--out", default="qpt_out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate ground truth and measurement data")
    _common(sim)

    rec = sub.add_parser("reconstruct", help="run reconstructions and write reports")
    _common(rec)
    rec.add_argument("--jobs", type=int, default=None, help="worker processes (default: cores)")
    rec.add_argument("--trajectory", help="reconstruct this data file instead of simulating")

    agg = sub.add_parser("aggregate", help="median and quartiles over reports")
    agg.add_argument("reports", nargs="+", help="report JSON files")
    agg.add_argument("--out", default="aggregate", help="output file prefix")

    pre = sub.add_parser("presets", help="preset utilities")
    pre.add_argument("action", choices=["list"])
    return parser


def _config(args):
    return resolve_config(args.preset, args.config, seed=args.seed, trials=args.trials)


def _trial_dir(out: Path, i: int) -> Path:
    return out / f"trial_{i:03d}"


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    for i in range(cfg.trials):
        path = simulate_trial(cfg, i).save(_trial_dir(out, i))
        print(path)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def _write_report(report: ReconstructionReport, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    report.to_json(directory / "report.json")
    report.history_csv(directory / "history.csv")


def _write_aggregate(reports, prefix: Path) -> None:
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}_summary.csv").write_text(summary_csv(aggregate_summary(reports)))
    Path(f"{prefix}_history.csv").write_text(table_csv(aggregate_histories(reports)))


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    if args.trajectory:
        report = reconstruct_trial(cfg, TrialData.load(args.trajectory))
        _write_report(report, out)
        print(json.dumps(report.relative_errors, sort_keys=True))
        return EXIT_OK
    reports = run_trials(cfg, args.jobs)
    for i, rep in enumerate(reports):
        _write_report(rep, _trial_dir(out, i))
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    _write_aggregate(reports, out / "aggregate")
    print(summary_csv(aggregate_summary(reports)), end="")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    reports = []
    for p in args.reports:
        if not Path(p).exists():
            raise ConfigError(f"reports: file {p} not found")
        reports.append(ReconstructionReport.from_json(p))
    try:
        _write_aggregate(reports, Path(args.out))
    except InvalidArgument as exc:
        raise ConfigError(f"reports: {exc}") from exc
    print(summary_csv(aggregate_summary(reports)), end="")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name, cfg in PRESETS.items():
        print(f"{name}\t{cfg.pipeline}\t{cfg.figure}\ttrials={cfg.trials}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
            "aggregate": cmd_aggregate, "presets": cmd_presets}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except OptimizationFailure as exc:
        print(f"qpt: optimization failure: {exc}", file=sys.stderr)
        return EXIT_OPTIM
    except (ConfigError, InvalidArgument, QPTError) as exc:
        print(f"qpt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
