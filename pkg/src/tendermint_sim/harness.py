"""Replay and multi-seed fuzzing on top of :mod:`simulation` and :mod:`checkers`."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .checkers import FAIL, NOT_APPLICABLE, PASS, Verdict, run_checks
from .scenario import Scenario
from .simulation import COMPLETE, Simulation, run_scenario
from .trace import Trace

log = logging.getLogger(__name__)

TraceLike = Union[Trace, str, Sequence[str]]


def _as_lines(trace: TraceLike) -> List[str]:
    if isinstance(trace, Trace):
        return trace.lines()
    if isinstance(trace, str):
        return [line for line in trace.splitlines() if line.strip()]
    return [line.rstrip("\n") for line in trace if line.strip()]


def _header(line: str) -> Optional[dict]:
    try:
        rec = json.loads(line)
    except ValueError:
        return None
    return rec if isinstance(rec, dict) and rec.get("k") == "header" else None


def replay(trace: TraceLike, scenario: Scenario) -> Verdict:
    """Re-run ``scenario`` and compare the result with ``trace`` record by record.

    ``trace`` may be a :class:`Trace` or its raw JSON-lines text, so that a
    corrupted file is still comparable. The header is checked first: a seed or
    scenario mismatch fails without running anything.
    """
    lines = _as_lines(trace)
    if not lines:
        return Verdict("replay", FAIL, ["trace is empty"])
    head = _header(lines[0])
    if head is None:
        return Verdict("replay", FAIL, ["record 0: missing or unreadable header"])
    if head.get("seed") != scenario.seed:
        return Verdict("replay", FAIL,
                       [f"record 0: trace seed {head.get('seed')} != scenario seed {scenario.seed}"])
    if head.get("scenario") != scenario.fingerprint():
        return Verdict("replay", FAIL,
                       [f"record 0: trace was produced by a different scenario "
                        f"({head.get('scenario')} != {scenario.fingerprint()})"])
    heights = head.get("heights", scenario.heights)
    if not isinstance(heights, int):
        return Verdict("replay", FAIL, ["record 0: header heights is not an integer"])

    fresh = Simulation(scenario).run(heights=heights).lines()
    for i, (want, got) in enumerate(zip(fresh, lines)):
        if want != got:
            return Verdict("replay", FAIL, [f"record {i} differs", f"expected {want}",
                                            f"found    {got}"], i)
    if len(fresh) != len(lines):
        i = min(len(fresh), len(lines))
        return Verdict("replay", FAIL, [f"record {i}: length differs "
                                        f"(expected {len(fresh)} records, found {len(lines)})"], i)
    return Verdict("replay", PASS, [], len(lines))


# -- fuzzing -------------------------------------------------------------------------

@dataclass
class SeedResult:
    seed: int
    status: str
    verdicts: List[Verdict]
    trace_path: Optional[str] = None

    @property
    def failed(self) -> List[Verdict]:
        return [v for v in self.verdicts if v.status == FAIL]


@dataclass
class FuzzReport:
    results: List[SeedResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(r.failed for r in self.results)

    def tally(self) -> Dict[str, Counter]:
        out: Dict[str, Counter] = {}
        for r in self.results:
            for v in r.verdicts:
                out.setdefault(v.name, Counter())[v.status] += 1
        return out

    def summary_lines(self) -> List[str]:
        statuses = Counter(r.status for r in self.results)
        lines = [f"seeds: {len(self.results)}  runs: "
                 + ", ".join(f"{k}={v}" for k, v in sorted(statuses.items()))]
        for name, counts in self.tally().items():
            lines.append(f"  {name}: pass={counts[PASS]} fail={counts[FAIL]} "
                         f"n/a={counts[NOT_APPLICABLE]}")
        for r in self.results:
            for v in r.failed:
                where = f" trace={r.trace_path}" if r.trace_path else ""
                lines.append(f"  seed {r.seed}: {v.line()}{where}")
        return lines


def _fuzz_one(args: Tuple[Scenario, int, Optional[List[str]], Optional[str], bool]) -> SeedResult:
    scenario, seed, names, out_dir, keep_all = args
    sc = scenario.with_seed(seed)
    trace = run_scenario(sc)
    verdicts = run_checks(trace, sc, names)
    result = SeedResult(seed, trace.status or "", verdicts)
    if out_dir is not None and (keep_all or result.failed or trace.status != COMPLETE):
        path = Path(out_dir) / f"seed-{seed}.jsonl"
        trace.write(path)
        result.trace_path = str(path)
    return result


def fuzz(scenario: Scenario, seeds: Iterable[int], checkers: Optional[Sequence[str]] = None,
         out_dir: Optional[Union[str, Path]] = None, keep_all: bool = False,
         jobs: int = 1) -> FuzzReport:
    """Run ``scenario`` under each seed and check every trace.

    Traces are written to ``out_dir`` for failing or incomplete runs (or all
    runs with ``keep_all``). Runs are independent, so ``jobs > 1`` spreads
    them over worker processes without changing any result.
    """
    names = list(checkers) if checkers is not None else None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(scenario, s, names, None if out_dir is None else str(out_dir), keep_all)
             for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fuzz_one, tasks, chunksize=8))
    else:
        results = [_fuzz_one(t) for t in tasks]
    report = FuzzReport(results)
    if not report.ok:
        log.warning("fuzz: %d of %d seeds had failing verdicts",
                    sum(1 for r in results if r.failed), len(results))
    return report
