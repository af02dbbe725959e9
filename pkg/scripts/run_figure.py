"""Run one or more figure presets and write per-trial reports plus aggregate CSVs.

    python scripts/run_figure.py fig5b-relax1q fig6-partial --trials 5 --out results
"""
import argparse
import json
import time
from pathlib import Path

from delayqpt.experiments import (
    PRESETS,
    aggregate_histories,
    aggregate_summary,
    resolve_config,
    run_trials,
    summary_csv,
    table_csv,
)


def run(name, trials, seed, jobs, out):
    cfg = resolve_config(name, trials=trials, seed=seed)
    t0 = time.perf_counter()
    reports = run_trials(cfg, jobs)
    elapsed = time.perf_counter() - t0
    out = out / name
    for i, rep in enumerate(reports):
        d = out / f"trial_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        rep.to_json(d / "report.json")
        rep.history_csv(d / "history.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    summary = summary_csv(aggregate_summary(reports))
    (out / "aggregate_summary.csv").write_text(summary)
    (out / "aggregate_history.csv").write_text(table_csv(aggregate_histories(reports)))
    print(f"== {name}: {cfg.trials} trials in {elapsed:.1f}s")
    print(summary, end="")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("presets", nargs="*", default=list(PRESETS), help="preset names (default: all)")
    p.add_argument("--trials", type=int, help="override the preset trial count")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))
    args = p.parse_args()
    for name in args.presets:
        run(name, args.trials, args.seed, args.jobs, args.out)


if __name__ == "__main__":
    main()
