"""Command line entry point: ``glkpz <experiment> --config FILE [--seed S] [--out DIR]``."""

from __future__ import annotations

import argparse
import os
import sys
import time

from .config import EXPERIMENTS, ConfigParseError, help_text, parse_config
from .experiments import DRIVERS
from .report import write_manifest, write_report


def run(cfg) -> int:
    out = cfg["output.directory"]
    t0 = time.perf_counter()
    seeds = [cfg["seed"] + i for i in range(cfg["seeds.count"])]
    try:
        report = DRIVERS[cfg["experiment"]](cfg)
    except Exception as exc:  # recorded in the manifest, reported as failure
        write_manifest(_ensure(out), cfg.emit(), seeds, time.perf_counter() - t0, [], False,
                       f"{type(exc).__name__}: {exc}")
        print(f"{cfg['experiment']}: error: {exc}", file=sys.stderr)
        return 2
    paths = write_report(report, out, cfg["output.format"])
    write_manifest(out, cfg.emit(), seeds, time.perf_counter() - t0, paths, report.passed)
    print(f"{report.name}: {'PASS' if report.passed else 'FAIL'}")
    for k, v in report.metrics.items():
        print(f"  {k} = {v}")
    return 0 if report.passed else 1


def _ensure(d):
    os.makedirs(d, exist_ok=True)
    return d


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="glkpz", formatter_class=argparse.RawDescriptionHelpFormatter,
                                 epilog="config keys:\n" + help_text())
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--seed", type=int, help="override the base seed")
    ap.add_argument("--out", help="override output.directory")
    a = ap.parse_args(argv)
    try:
        cfg = parse_config(a.config)
    except (ConfigParseError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    over = {"experiment": a.experiment}
    if a.seed is not None:
        over["seed"] = a.seed
    if a.out:
        over["output.directory"] = a.out
    return run(cfg.with_overrides(**over))


if __name__ == "__main__":
    sys.exit(main())
