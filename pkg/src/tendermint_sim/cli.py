"""Command-line entry point: ``tmsim run|check|replay|fuzz``.

Exit status is 0 when every verdict passes, 1 when any verdict fails (or a
run ends in a liveness failure), and 2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from .checkers import CHECKERS, run_checks
from .harness import fuzz, replay
from .scenario import Scenario, ScenarioError, load_scenario
from .simulation import COMPLETE, run_scenario
from .trace import Trace

OUT_DIR_ENV = "TMSIM_OUT_DIR"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def parse_seeds(text: str) -> List[int]:
    """``N`` means seeds 0..N-1; ``A:B`` is the half-open range; ``a,b,c`` is a list."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            seeds = list(range(int(lo), int(hi)))
        elif "," in text:
            seeds = [int(s) for s in text.split(",") if s.strip()]
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed spec {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError(f"seed spec {text!r} selects no seeds")
    return seeds


def parse_checkers(text: str) -> List[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    unknown = [n for n in names if n not in CHECKERS]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown checker(s) {', '.join(unknown)}; choose from {', '.join(CHECKERS)}")
    return names


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_seed(args.seed)
    if getattr(args, "heights", None) is not None:
        sc = replace(sc, heights=args.heights)
    return sc


def _print_verdicts(verdicts) -> bool:
    for v in verdicts:
        print(v.line())
    return all(v.ok for v in verdicts)


def cmd_run(args) -> int:
    sc = _scenario(args)
    trace = run_scenario(sc)
    name = f"{Path(args.scenario).stem}-seed{sc.seed}.jsonl"
    out = Path(args.out) if args.out else default_out_dir() / name
    out.parent.mkdir(parents=True, exist_ok=True)
    trace.write(out)
    end = trace.records[-1]
    print(f"wrote {len(trace)} records to {out}")
    print(f"status: {end['status']}" + (f" ({end['reason']})" if end["reason"] else ""))
    if args.check:
        ok = _print_verdicts(run_checks(trace, sc, args.checkers))
        if not ok:
            return EXIT_FAIL
    return EXIT_OK if trace.status == COMPLETE else EXIT_FAIL


def cmd_check(args) -> int:
    trace = Trace.read(args.trace)
    sc = load_scenario(args.scenario)
    head = trace.header
    if head.get("seed") is not None:
        sc = sc.with_seed(head["seed"])
    ok = _print_verdicts(run_checks(trace, sc, args.checkers))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_replay(args) -> int:
    text = Path(args.trace).read_text()
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    else:
        # default to the seed recorded in the trace; an unreadable header
        # leaves the scenario's own seed and fails inside replay()
        first = text.split("\n", 1)[0]
        try:
            seed = Trace.loads(first).header.get("seed")
        except ValueError:
            seed = None
        if isinstance(seed, int):
            sc = sc.with_seed(seed)
    verdict = replay(text, sc)
    print(verdict.line())
    return EXIT_OK if verdict.ok else EXIT_FAIL


def cmd_fuzz(args) -> int:
    sc = _scenario(args)
    out = Path(args.out) if args.out else default_out_dir() / f"fuzz-{Path(args.scenario).stem}"
    report = fuzz(sc, args.seeds, args.checkers, out_dir=out, keep_all=args.keep_all,
                  jobs=args.jobs)
    for line in report.summary_lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmsim", description="Deterministic Tendermint consensus simulator and checkers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write its trace")
    p.add_argument("--scenario", required=True, help="scenario file (INI format)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--heights", type=int, help="override the number of heights to decide")
    p.add_argument("--out", help=f"trace path (default: ${OUT_DIR_ENV} or cwd)")
    p.add_argument("--check", action="store_true", help="also run the checkers on the trace")
    p.add_argument("--checkers", type=parse_checkers, help="comma-separated checker subset")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run property checkers over an existing trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--checkers", type=parse_checkers, help="comma-separated checker subset")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-execute a trace's run and compare byte for byte")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--seed", type=int, help="seed to replay with (default: the trace's own)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("fuzz", help="run a scenario under many seeds and aggregate verdicts")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("100"),
                   help="N (0..N-1), A:B, or a comma list (default 100)")
    p.add_argument("--heights", type=int, help="override the number of heights to decide")
    p.add_argument("--checkers", type=parse_checkers, help="comma-separated checker subset")
    p.add_argument("--out", help="directory for failing traces")
    p.add_argument("--keep-all", action="store_true", help="write every trace, not only failures")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_fuzz)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"tmsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
