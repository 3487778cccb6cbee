"""Post-hoc property checks over traces.

Each checker is a pure function of ``(trace, scenario)`` returning a
:class:`Verdict`. Checkers only read trace records, so they work equally on
fresh traces and on traces loaded from disk.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .messages import Value
from .scenario import Scenario
from .trace import Trace
from .validators import proposer, quorum_power

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"


@dataclass
class Verdict:
    name: str
    status: str
    details: List[str] = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return self.status != FAIL

    def line(self) -> str:
        extra = f" ({self.checked} checked)" if self.checked else ""
        head = f"{self.name}: {self.status}{extra}"
        if self.details and self.status != PASS:
            head += " - " + "; ".join(self.details[:3])
        return head


def _correct(trace: Trace) -> set:
    return set(trace.header["correct"])


# -- Agreement / Validity --------------------------------------------------------

def check_agreement(trace: Trace, scenario: Optional[Scenario] = None) -> Verdict:
    correct = _correct(trace)
    by_height: Dict[int, List[dict]] = defaultdict(list)
    for rec in trace.of_kind("decide"):
        if rec["p"] in correct:
            by_height[rec["h"]].append(rec)
    details = []
    for h, recs in sorted(by_height.items()):
        first = recs[0]
        for other in recs[1:]:
            if other["id"] != first["id"]:
                details.append(
                    f"height {h}: p{first['p']} decided {first['id'][:12]} at t={first['t']} but "
                    f"p{other['p']} decided {other['id'][:12]} at t={other['t']}"
                )
                break
        seen = set()
        for rec in recs:
            if rec["p"] in seen:
                details.append(f"height {h}: p{rec['p']} decided twice")
            seen.add(rec["p"])
    n = sum(len(v) for v in by_height.values())
    return Verdict("agreement", FAIL if details else PASS, details, n)


def check_validity(trace: Trace, scenario: Optional[Scenario] = None,
                   predicate: Optional[Callable[[Value], bool]] = None) -> Verdict:
    if predicate is None:
        predicate = scenario.validity() if scenario is not None else (lambda v: True)
    correct = _correct(trace)
    details = []
    n = 0
    for rec in trace.of_kind("decide"):
        if rec["p"] not in correct:
            continue
        n += 1
        value = Value(bytes.fromhex(rec["payload"]))
        if value.id.hex() != rec["id"]:
            details.append(f"p{rec['p']} height {rec['h']}: payload does not hash to recorded id")
        elif not predicate(value):
            details.append(f"p{rec['p']} decided {value.payload!r} at height {rec['h']}, "
                           f"rejected by valid()")
    return Verdict("validity", FAIL if details else PASS, details, n)


# -- Termination and the decide-time bound ----------------------------------------

_INITIAL = {"h": 0, "r": 0, "step": 0, "lr": -1, "lid": "nil", "vr": -1, "vid": "nil"}


@dataclass
class BoundInstance:
    """One (height, round) at which the round-synchronisation hypotheses were evaluated."""

    height: int
    round: int
    entered_at: int
    first: int
    proposer: int
    applicable: bool
    reason: str = ""
    bound: Optional[int] = None
    decided: Dict[int, int] = field(default_factory=dict)


def bound_instances(trace: Trace, scenario: Scenario) -> List[BoundInstance]:
    """Evaluate the decide-time bound's hypotheses at every first correct round entry.

    For round 0 of a height there is no previous precommit timeout; the
    bound degenerates to ``t + 4*delta`` and laggards may still be finishing
    the previous height.
    """
    correct = sorted(_correct(trace))
    vset = scenario.vset
    to = scenario.timeouts
    delta = scenario.delta
    gst = scenario.gst
    requested = trace.header.get("heights", scenario.heights)

    state: Dict[int, Optional[dict]] = {p: None for p in correct}
    decided_heights: Dict[int, Dict[int, int]] = defaultdict(dict)  # h -> pid -> t
    seen: set = set()
    instances: List[BoundInstance] = []

    for rec in trace.records:
        k = rec["k"]
        if k == "decide" and rec["p"] in state:
            decided_heights[rec["h"]].setdefault(rec["p"], rec["t"])
            continue
        if k != "state-change" or rec["p"] not in state:
            continue
        pid = rec["p"]
        prev = state[pid]
        new = {key: rec[key] for key in _INITIAL}
        state[pid] = new
        if prev is not None and (new["h"], new["r"]) == (prev["h"], prev["r"]):
            continue
        hr = (new["h"], new["r"])
        if hr in seen:
            continue
        seen.add(hr)
        H, r = hr
        if H >= requested:
            continue
        t = rec["t"]
        q = proposer(vset, H, r)
        inst = BoundInstance(H, r, t, pid, q, False)
        instances.append(inst)

        prev_term = to.precommit(r - 1) if r > 0 else 0
        reasons = []
        if gst is None or t < gst:
            reasons.append("entered before gst")
        now = {c: state[c] or _INITIAL for c in correct}
        for c in correct:
            s = now[c]
            if r > 0 and not (s["h"] == H and s["r"] <= r):
                reasons.append(f"p{c} at (h={s['h']}, r={s['r']})")
            if r == 0 and s["h"] not in (H - 1, H):
                reasons.append(f"p{c} at height {s['h']}")
        if decided_heights.get(H):
            reasons.append("height already decided by a correct process")
        if q not in correct:
            reasons.append(f"proposer p{q} is faulty")
        else:
            sq = now[q]
            vr_q = sq["vr"] if sq["h"] == H else -1
            for c in correct:
                s = now[c]
                if s["h"] == H and s["lr"] > vr_q:
                    reasons.append(f"p{c} lockedRound {s['lr']} > proposer validRound {vr_q}")
        if not to.propose(r) > 2 * delta + prev_term:
            reasons.append("timeoutPropose(r) <= 2*delta + timeoutPrecommit(r-1)")
        if not to.prevote(r) > 2 * delta:
            reasons.append("timeoutPrevote(r) <= 2*delta")
        if not to.precommit(r) > 2 * delta:
            reasons.append("timeoutPrecommit(r) <= 2*delta")
        if reasons:
            inst.reason = "; ".join(reasons)
            continue
        inst.applicable = True
        inst.bound = t + 4 * delta + prev_term

    for inst in instances:
        if inst.applicable:
            inst.decided = dict(decided_heights.get(inst.height, {}))
    return instances


def check_decide_bound(trace: Trace, scenario: Scenario) -> Verdict:
    """Every applicable round entry is followed by all correct decisions before the bound."""
    if scenario.gst is None:
        return Verdict("decide-bound", NOT_APPLICABLE, ["gst is never"])
    correct = sorted(_correct(trace))
    end = trace.end_time
    details = []
    checked = 0
    for inst in bound_instances(trace, scenario):
        if not inst.applicable:
            continue
        checked += 1
        for c in correct:
            t = inst.decided.get(c)
            if t is None:
                if end >= inst.bound:
                    details.append(f"(h={inst.height}, r={inst.round}): p{c} undecided at bound "
                                   f"{inst.bound}")
            elif not t < inst.bound:
                details.append(f"(h={inst.height}, r={inst.round}) entered t={inst.entered_at}: "
                               f"p{c} decided at t={t}, bound {inst.bound}")
    if checked == 0:
        return Verdict("decide-bound", NOT_APPLICABLE, ["no round satisfies the hypotheses"])
    return Verdict("decide-bound", FAIL if details else PASS, details, checked)


def check_termination(trace: Trace, scenario: Scenario) -> Verdict:
    if scenario.gst is None:
        return Verdict("termination", NOT_APPLICABLE, ["gst is never"])
    if trace.end_time < scenario.gst:
        return Verdict("termination", NOT_APPLICABLE, ["gst beyond trace end"])
    correct = sorted(_correct(trace))
    heights = trace.header.get("heights", scenario.heights)
    decided = {(r["p"], r["h"]) for r in trace.of_kind("decide")}
    details = [f"p{c} never decided height {h}" for c in correct for h in range(heights)
               if (c, h) not in decided]
    bound = check_decide_bound(trace, scenario)
    if bound.status == FAIL:
        details.extend(bound.details)
    return Verdict("termination", FAIL if details else PASS, details,
                   len(decided) + bound.checked)


# -- Lock restriction ------------------------------------------------------------------

def check_lock_restriction(trace: Trace, scenario: Scenario) -> Verdict:
    """Correct processes that jointly locked v stop prevoting other values afterwards.

    The locking set must intersect every quorum, i.e. carry more power than
    ``total - quorum``; at ``n = 3f + 1`` that is exactly ``f + 1``.
    """
    correct = _correct(trace)
    vset = scenario.vset
    needed = vset.total_power - quorum_power(vset) + 1
    locks: Dict[Tuple[int, int, str], set] = defaultdict(set)
    prevotes: Dict[Tuple[int, int], List[Tuple[int, str]]] = defaultdict(list)  # (pid, h) -> [(r, id)]
    for rec in trace.of_kind("send"):
        if rec["p"] not in correct:
            continue
        m = rec["msg"]
        if m["kind"] == "PRECOMMIT" and m["id"] != "nil":
            locks[(m["h"], m["r"], m["id"])].add(rec["p"])
        elif m["kind"] == "PREVOTE":
            prevotes[(rec["p"], m["h"])].append((m["r"], m["id"]))
    details = []
    checked = 0
    for (h, r0, vid), members in sorted(locks.items()):
        if vset.power_of(members) < needed:
            continue
        checked += 1
        for p in sorted(members):
            for r, other in prevotes.get((p, h), ()):
                if r > r0 and other not in ("nil", vid):
                    details.append(f"p{p} locked {vid[:12]} at (h={h}, r={r0}) with "
                                   f"{sorted(members)} but prevoted {other[:12]} at r={r}")
    return Verdict("lock-restriction", FAIL if details else PASS, details, checked)


# -- validValue propagation ------------------------------------------------------------

def check_valid_value_propagation(trace: Trace, scenario: Scenario) -> Verdict:
    """A post-GST lock of v at round r reaches every correct validValue before round r+1."""
    if scenario.gst is None:
        return Verdict("valid-value", NOT_APPLICABLE, ["gst is never"])
    correct = sorted(_correct(trace))
    gst = scenario.gst
    to = scenario.timeouts
    delta = scenario.delta

    changes: Dict[int, List[Tuple[int, dict]]] = defaultdict(list)
    locks = []
    for i, rec in enumerate(trace.records):
        if rec["p"] not in correct:
            continue
        if rec["k"] == "state-change":
            changes[rec["p"]].append((i, rec))
        elif rec["k"] == "send" and rec["msg"]["kind"] == "PRECOMMIT" and rec["msg"]["id"] != "nil":
            locks.append(rec)

    details = []
    unmet = 0
    checked = 0
    for lock in locks:
        m = lock["msg"]
        h, r, vid = m["h"], m["r"], m["id"]
        if not lock["t"] > gst:
            continue
        if not to.precommit(r) > 2 * delta:
            unmet += 1
            continue
        checked += 1
        for c in correct:
            leave = next((i for i, s in changes[c] if s["h"] == h and s["r"] > r), None)
            if leave is None:
                continue
            ok = any(i < leave and s["h"] == h and s["vr"] == r and s["vid"] == vid
                     for i, s in changes[c])
            if not ok:
                details.append(f"p{lock['p']} locked {vid[:12]} at (h={h}, r={r}) t={lock['t']}; "
                               f"p{c} started a later round without validValue update")
    if checked == 0:
        reason = "hypotheses unmet" if unmet else "no post-gst locks"
        return Verdict("valid-value", NOT_APPLICABLE, [reason])
    return Verdict("valid-value", FAIL if details else PASS, details, checked)


# -- network-level properties ----------------------------------------------------------

def _msg_key(m: dict) -> Tuple:
    return (m["kind"], m["h"], m["r"], m["from"], m["id"], m.get("vr"), m.get("payload"))


def check_gossip(trace: Trace, scenario: Scenario) -> Verdict:
    """Every message a correct process sent or received reaches all correct processes in time."""
    if scenario.gst is None:
        return Verdict("gossip", NOT_APPLICABLE, ["gst is never"])
    correct = _correct(trace)
    gst, delta = scenario.gst, scenario.delta
    end = trace.end_time
    first_seen: Dict[Tuple, int] = {}
    held: Dict[Tuple, Dict[int, int]] = defaultdict(dict)
    for rec in trace.records:
        if rec["k"] not in ("send", "deliver") or rec["p"] not in correct:
            continue
        key = _msg_key(rec["msg"])
        first_seen.setdefault(key, rec["t"])
        held[key].setdefault(rec["p"], rec["t"])
    details = []
    checked = 0
    for key, t in first_seen.items():
        deadline = max(t, gst) + delta
        if deadline > end:
            continue
        checked += 1
        for c in correct:
            got = held[key].get(c)
            if got is None or not got < deadline:
                details.append(f"{key[0]} h={key[1]} r={key[2]} from p{key[3]} first seen t={t}: "
                               f"p{c} {'never got it' if got is None else f'got it at {got}'}")
    return Verdict("gossip", FAIL if details else PASS, details, checked)


def check_monotonic_time(trace: Trace, scenario: Optional[Scenario] = None) -> Verdict:
    last = 0
    for i, rec in enumerate(trace.records):
        if rec["t"] < last:
            return Verdict("monotonic-time", FAIL, [f"record {i} goes back to t={rec['t']}"])
        last = rec["t"]
    return Verdict("monotonic-time", PASS, [], len(trace))


CHECKERS: Dict[str, Callable[[Trace, Scenario], Verdict]] = {
    "agreement": check_agreement,
    "validity": check_validity,
    "termination": check_termination,
    "decide-bound": check_decide_bound,
    "lock-restriction": check_lock_restriction,
    "valid-value": check_valid_value_propagation,
    "gossip": check_gossip,
    "monotonic-time": check_monotonic_time,
}


def run_checks(trace: Trace, scenario: Scenario,
               names: Optional[Iterable[str]] = None) -> List[Verdict]:
    selected = list(CHECKERS) if names is None else list(names)
    unknown = [n for n in selected if n not in CHECKERS]
    if unknown:
        raise KeyError(f"unknown checker(s): {', '.join(unknown)}")
    return [CHECKERS[n](trace, scenario) for n in selected]
