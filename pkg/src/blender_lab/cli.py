"""blab <kind> --scenario FILE [--out DIR] [--seed N] [--threads N] [--figures]

Exit status: 0 when every verdict passes, 1 on a failed verdict or a
numerical failure, 2 when the scenario cannot be parsed, 3 when it parses
but is invalid.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .experiments import run_kind
from .report import emit_report, write_record
from .scenario import KINDS, ScenarioParseError, ScenarioValidationError, load_scenario

__all__ = ["main", "run_scenario", "resolve_threads"]

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INVALID = 0, 1, 2, 3


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("BLAB_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def run_scenario(path, out_dir=None, seed: int | None = None, threads: int | None = None,
                 kind: str | None = None, figures: bool = False) -> int:
    try:
        sc = load_scenario(path)
    except ScenarioParseError as exc:
        print(f"blab: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        print(f"blab: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if kind is not None and kind != sc.kind:
        print(f"blab: scenario kind {sc.kind!r} does not match {kind!r}", file=sys.stderr)
        return EXIT_INVALID
    if seed is not None and not 0 <= seed < 2 ** 64:
        print("blab: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    out = Path(out_dir) if out_dir else Path("results") / sc.kind
    try:
        rec = run_kind(sc, seed, resolve_threads(threads))
    except ScenarioParseError as exc:
        print(f"blab: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        print(f"blab: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"blab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        write_record(rec, out)
        emit_report([rec], out, figures=figures)
    except OSError as exc:
        print(f"blab: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK if rec.passed else EXIT_FAIL


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="blab", description="blender-lab experiment runner")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--scenario", required=True, help="scenario file")
    ap.add_argument("--out", help="output directory (default results/<kind>)")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--threads", type=int, help="worker threads (default $BLAB_THREADS or 1)")
    ap.add_argument("--figures", action="store_true", help="also draw PNGs (needs matplotlib)")
    args = ap.parse_args(argv)
    return run_scenario(args.scenario, args.out, args.seed, args.threads, args.kind, args.figures)


if __name__ == "__main__":
    sys.exit(main())
