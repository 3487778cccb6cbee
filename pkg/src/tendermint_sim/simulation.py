"""Drive correct processes and adversaries over the simulated network."""

from __future__ import annotations

import logging
from typing import Dict, Optional

from .adversary import Adversary, Send, Timer, make_adversary
from .consensus import (
    Broadcast, Decide, Process, RuleFired, ScheduleTimeout, StateChanged, TimeoutExpired,
)
from .network import AdversaryAction, DeliverEvent, NetworkParams, SimNetwork, TimeoutFire
from .scenario import Scenario
from .trace import TRACE_VERSION, Trace

log = logging.getLogger(__name__)

COMPLETE = "complete"
LIVENESS_FAILURE = "liveness-failure"


def _state_record(snap) -> dict:
    h, r, step, lr, lid, vr, vid = snap
    return {"h": h, "r": r, "step": step, "lr": lr, "lid": lid, "vr": vr, "vid": vid}


class Simulation:
    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        vset = scenario.vset
        self.vset = vset
        self.params = NetworkParams(
            gst=scenario.gst, delta=scenario.delta, seed=scenario.seed,
            async_delay=scenario.async_delay, duplicate_rate=scenario.duplicate_rate,
            lossy_pre_gst=scenario.lossy_pre_gst,
        )
        correct = scenario.correct
        self.net = SimNetwork(self.params, vset.size, correct)
        valid = scenario.validity()
        self.processes: Dict[int, Process] = {
            pid: Process(pid, vset, scenario.timeouts, valid=valid,
                         rule_order=scenario.rule_order,
                         rule_seed=hash_seed(scenario.seed, pid),
                         buffer_heights=scenario.buffer_heights)
            for pid in correct
        }
        self.adversaries: Dict[int, Adversary] = {
            pid: make_adversary(spec, pid, vset, scenario.timeouts, correct, scenario.seed,
                                buffer_heights=scenario.buffer_heights)
            for pid, spec in scenario.adversaries
        }
        self.trace = Trace()
        self.now = 0
        self._evidence_seen: Dict[int, int] = {pid: 0 for pid in correct}
        self._adv_sent: Dict[tuple, int] = {}

    # -- output handling -------------------------------------------------------

    def _apply(self, pid: int, outputs) -> None:
        tr = self.trace
        now = self.now
        for out in outputs:
            if isinstance(out, Broadcast):
                tr.add(now, pid, "send", msg=out.msg.to_dict())
                self.net.broadcast(pid, out.msg, now)
            elif isinstance(out, ScheduleTimeout):
                tr.add(now, pid, "timeout-schedule", kind=out.kind.value, h=out.height,
                       r=out.round, at=now + out.duration)
                self.net.push(now + out.duration, TimeoutFire(pid, out.kind, out.height, out.round))
            elif isinstance(out, Decide):
                tr.add(now, pid, "decide", h=out.height, r=out.round, id=out.value.id.hex(),
                       payload=out.value.payload.hex())
            elif isinstance(out, RuleFired):
                tr.add(now, pid, "rule-fire", rule=out.rule, h=out.height, r=out.round,
                       detail=out.detail)
            elif isinstance(out, StateChanged):
                tr.add(now, pid, "state-change", **_state_record(out.snapshot))
        proc = self.processes[pid]
        ev = proc.log.evidence()
        for e in ev[self._evidence_seen[pid]:]:
            tr.add(now, pid, "evidence", sender=e.sender, first=e.first.to_dict(),
                   second=e.second.to_dict())
        self._evidence_seen[pid] = len(ev)

    def _apply_adversary(self, pid: int, actions) -> None:
        cap = self.scenario.adversary_cap
        for act in actions:
            if isinstance(act, Send):
                msg = act.msg
                key = (pid, msg.height, msg.round)
                if self._adv_sent.get(key, 0) >= cap:
                    continue
                self._adv_sent[key] = self._adv_sent.get(key, 0) + 1
                recipients = range(self.vset.size) if act.recipients is None else act.recipients
                to = sorted(set(recipients) - {pid})
                self.trace.add(self.now, pid, "send", msg=msg.to_dict(), to=to)
                self.net.send(pid, msg, to, self.now)
            elif isinstance(act, Timer):
                self.net.push(self.now + act.delay, AdversaryAction(pid, act.payload))

    # -- main loop -----------------------------------------------------------------

    def _done(self, heights: int) -> bool:
        return all(p.state.height >= heights for p in self.processes.values())

    def run(self, heights: Optional[int] = None, time_limit: Optional[int] = None) -> Trace:
        sc = self.scenario
        heights = sc.heights if heights is None else heights
        time_limit = sc.time_limit() if time_limit is None else time_limit
        self.trace.add(0, -1, "header", version=TRACE_VERSION, seed=sc.seed,
                       scenario=sc.fingerprint(), powers=list(sc.powers), f=sc.max_faulty,
                       correct=list(sc.correct), gst=sc.gst, delta=sc.delta,
                       heights=heights, rule_order=sc.rule_order.value)
        for pid in sorted(self.processes):
            self._apply(pid, self.processes[pid].start())
        for pid in sorted(self.adversaries):
            self._apply_adversary(pid, self.adversaries[pid].on_start(0))

        status = LIVENESS_FAILURE
        reason = "event queue exhausted"
        while True:
            if self._done(heights):
                status, reason = COMPLETE, ""
                break
            t = self.net.peek_time()
            if t is None:
                break
            if t > time_limit:
                reason = f"time limit {time_limit} exceeded"
                break
            t, event = self.net.pop()
            self.now = t
            self._dispatch(event)
        self.trace.add(self.now, -1, "end", status=status, reason=reason,
                       heights={str(p): proc.state.height
                                for p, proc in sorted(self.processes.items())})
        if status != COMPLETE:
            log.info("run seed=%d ended without deciding %d heights: %s", sc.seed, heights, reason)
        return self.trace

    def _dispatch(self, event) -> None:
        now = self.now
        if isinstance(event, DeliverEvent):
            msg, to = event.msg, event.to
            self.trace.add(now, to, "deliver", msg=msg.to_dict())
            if to in self.processes:
                self.net.relay_on_receive(to, msg, now)
                self._apply(to, self.processes[to].receive(msg))
            else:
                self._apply_adversary(to, self.adversaries[to].on_deliver(msg, now))
        elif isinstance(event, TimeoutFire):
            self.trace.add(now, event.pid, "timeout-fire", kind=event.kind.value,
                           h=event.height, r=event.round)
            proc = self.processes[event.pid]
            self._apply(event.pid, proc.handle(
                TimeoutExpired(event.kind, event.height, event.round)))
        elif isinstance(event, AdversaryAction):
            self._apply_adversary(event.pid,
                                  self.adversaries[event.pid].on_action(event.payload, now))
        else:
            raise TypeError(f"unknown simulator event {event!r}")


def hash_seed(seed: int, pid: int) -> int:
    """Per-process stream seed, independent of Python's hash randomization."""
    return (seed * 1_000_003 + pid * 7919 + 17) & 0xFFFFFFFF


def run_scenario(scenario: Scenario) -> Trace:
    return Simulation(scenario).run()

