"""Command-line entry point: ``ccregion <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, kernels
from .exceptions import CCRError
from .harness import ExperimentSpec, default_spec, run_experiment

SUBCOMMANDS = {
    "coverage": ("coverage_table", "coverage of theta* per noise law and k-selection method"),
    "widths": ("width_table", "coordinate-wise interval widths of the region"),
    "reject": ("rejection_test", "emptiness test on the sine model and on a linear null"),
    "noisefree": ("noise_free_vs_noisy", "coverage of Y against coverage of the noise-free output"),
    "curve": ("coverage_curve", "guaranteed coverage against k (curve.csv: method,k,coverage; "
                                "pac_delta.csv: delta,k,coverage)"),
    "abstain": ("abstention_sweep", "abstention error bound check and sweep "
                                    "(sweep.csv: threshold,rejection_rate,mse_accepted)"),
}

OUTPUT_NOTE = """outputs in --out:
  trials.csv   trial,seed,noise,d,method,k,covered,votes,widths,nodes,status + experiment columns
  summary.csv  per-setting aggregates (summary.json with --emit json)
  timings.csv  wall-clock solve times, when the experiment solves MILPs
  timing_summary.csv  mean solve time per noise, d and method
  meta.json    resolved configuration and package version"""


def _load_spec(name: str, args) -> ExperimentSpec:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if doc.get("name", name) != name:
            raise SystemExit(f"config describes {doc['name']!r}, not {name!r}")
        doc["name"] = name
        spec = ExperimentSpec.from_dict(doc)
    else:
        spec = default_spec(name)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if args.workers is not None:
        over["workers"] = args.workers
    if args.out is not None:
        over["out"] = args.out
    return replace(spec, **over) if over else spec


def _selftest() -> int:
    """Quick smoke run of every experiment on tiny settings."""
    import tempfile

    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for cmd, (name, _) in SUBCOMMANDS.items():
            spec = replace(default_spec(name), trials=2, out=str(Path(tmp) / cmd))
            if name == "noise_free_vs_noisy":
                spec = replace(spec, test_size=200)
            try:
                run_experiment(spec)
                print(f"ok    {cmd}")
            except Exception as exc:  # report and keep going
                failures += 1
                print(f"FAIL  {cmd}: {type(exc).__name__}: {exc}")
    print(f"backend: {kernels.BACKEND}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccregion", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog=OUTPUT_NOTE)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, (_, help_text) in SUBCOMMANDS.items():
        p = sub.add_parser(cmd, help=help_text, description=help_text, epilog=OUTPUT_NOTE,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="JSON experiment document; flags override its fields")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--trials", type=int, help="number of Monte Carlo trials")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--out", default=None, help="output directory (default: ./<subcommand>-out)")
        p.add_argument("--emit", choices=("csv", "json"), default="csv", help="summary format")
    sub.add_parser("selftest", help="run every experiment on a tiny budget")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return _selftest()
    name = SUBCOMMANDS[args.command][0]
    if args.out is None:
        args.out = f"{args.command}-out"
    try:
        spec = _load_spec(name, args)
        result = run_experiment(spec, emit=args.emit)
    except CCRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for row in result.summary:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    for label, path in result.files.items():
        print(f"wrote {label}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
