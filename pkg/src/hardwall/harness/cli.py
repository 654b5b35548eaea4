"""Command line: ``hardwall {geometry,invariant-measures,dynamics,converge}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from ..errors import HardwallError
from .config import load_config
from .suites import SUITE_RUNNERS, SuiteResult

COMMANDS = {
    "geometry": "geometry",
    "invariant-measures": "invariant-measures",
    "dynamics": "dynamics",
    "converge": "convergence",
}

CSV_NAMES = {
    "geometry": "geometry_audit.csv",
    "invariant-measures": "invariant_measures.csv",
    "dynamics": "dynamics.csv",
    "convergence": "convergence.csv",
}


def _cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_outputs(result: SuiteResult, out_dir) -> Path:
    """Write the suite CSV and ``summary.json``; returns the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / CSV_NAMES.get(result.suite, f"{result.suite}.csv")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.header)
        for row in result.rows:
            w.writerow([_cell(v) for v in row])
    summary = {"suite": result.suite, "passed": result.passed,
               "records": [r.to_json() for r in result.records]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hardwall",
                                 description="Conservative hard-wall interface experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="key = value configuration file")
        sp.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    suite = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, suite=suite, master_seed=args.seed,
                          output_dir=args.out)
        result = SUITE_RUNNERS[suite](cfg, threads=args.threads)
    except HardwallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    path = write_outputs(result, cfg.output_dir)
    for r in result.records:
        flag = "PASS" if r.passed else "FAIL"
        print(f"{flag} {r.statistic} {r.parameters} value={r.value:.6g} se={r.se:.3g}")
    print(f"wrote {path}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
