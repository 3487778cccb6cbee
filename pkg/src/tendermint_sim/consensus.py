"""The consensus state machine for a single correct process.

A :class:`Process` owns its protocol variables and its :class:`MessageLog`.
Inputs (start, message delivery, timeout expiry) go through :meth:`Process.handle`,
which evaluates every enabled upon-rule until none is left and returns the
outputs produced along the way. Nothing here reads clocks or global state;
the only randomness is the optional seeded rule-order policy.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

from .messages import NIL, Message, Value
from .validators import ProcessId, ValidatorSet, proposer
from .votekeeper import MessageLog, ThresholdEvent


class Step(enum.IntEnum):
    PROPOSE = 0
    PREVOTE = 1
    PRECOMMIT = 2

    def __str__(self) -> str:
        return self.name.lower()


class TimeoutKind(str, enum.Enum):
    PROPOSE = "propose"
    PREVOTE = "prevote"
    PRECOMMIT = "precommit"


@dataclass(frozen=True)
class TimeoutConfig:
    init_propose: int
    init_prevote: int
    init_precommit: int
    delta: int

    def __post_init__(self) -> None:
        if min(self.init_propose, self.init_prevote, self.init_precommit, self.delta) <= 0:
            raise ValueError(f"timeouts must be strictly positive: {self}")

    def propose(self, round: int) -> int:
        return self.init_propose + round * self.delta

    def prevote(self, round: int) -> int:
        return self.init_prevote + round * self.delta

    def precommit(self, round: int) -> int:
        return self.init_precommit + round * self.delta

    def duration(self, kind: TimeoutKind, round: int) -> int:
        init = {
            TimeoutKind.PROPOSE: self.init_propose,
            TimeoutKind.PREVOTE: self.init_prevote,
            TimeoutKind.PRECOMMIT: self.init_precommit,
        }[kind]
        return init + round * self.delta


@dataclass
class ProcessState:
    height: int = 0
    round: int = 0
    step: Step = Step.PROPOSE
    locked_value: Optional[Value] = None
    locked_round: int = -1
    valid_value: Optional[Value] = None
    valid_round: int = -1
    decisions: Dict[int, Value] = field(default_factory=dict)

    def snapshot(self) -> Tuple:
        """Comparable summary used for state-change trace records."""
        return (
            self.height, self.round, int(self.step),
            self.locked_round, _vid_hex(self.locked_value),
            self.valid_round, _vid_hex(self.valid_value),
        )


def _vid_hex(v: Optional[Value]) -> str:
    return "nil" if v is None else v.id.hex()


# -- inputs and outputs ----------------------------------------------------

@dataclass(frozen=True)
class Start:
    pass


@dataclass(frozen=True)
class Deliver:
    msg: Message


@dataclass(frozen=True)
class TimeoutExpired:
    kind: TimeoutKind
    height: int
    round: int


Input = Union[Start, Deliver, TimeoutExpired]


@dataclass(frozen=True)
class Broadcast:
    msg: Message


@dataclass(frozen=True)
class ScheduleTimeout:
    kind: TimeoutKind
    height: int
    round: int
    duration: int


@dataclass(frozen=True)
class Decide:
    height: int
    round: int
    value: Value


@dataclass(frozen=True)
class StartHeight:
    height: int


@dataclass(frozen=True)
class RuleFired:
    """Diagnostic output naming the rule that executed (``anomaly`` for invalid decisions)."""

    rule: str
    height: int
    round: int
    detail: str = ""


@dataclass(frozen=True)
class StateChanged:
    """Snapshot of the protocol variables after a transition that changed them."""

    snapshot: Tuple


Output = Union[Broadcast, ScheduleTimeout, Decide, StartHeight, RuleFired, StateChanged]


# -- pluggable value source and validity ------------------------------------

ValueSource = Callable[[int, int, ProcessId], Value]
Validity = Callable[[Value], bool]


class CountingValueSource:
    """Default ``getValue``: fresh payload tagged with height, proposer and a nonce."""

    def __init__(self) -> None:
        self.nonce = 0

    def __call__(self, height: int, round: int, pid: ProcessId) -> Value:
        payload = f"h={height};p={pid};n={self.nonce}".encode()
        self.nonce += 1
        return Value(payload)


def accept_all(value: Value) -> bool:
    return True


class RuleOrder(str, enum.Enum):
    FIXED = "fixed"
    RANDOM = "random"


# fixed-priority order; lower sorts first
_PRIORITY = {
    "decide": 0,
    "lock": 1,
    "proposal-fresh": 2,
    "proposal-valid-round": 3,
    "prevote-nil-quorum": 4,
    "prevote-any": 5,
    "precommit-any": 6,
    "skip-round": 7,
}


@dataclass(frozen=True)
class _Candidate:
    rule: str
    key: Tuple
    fire: Callable[[], None]


class Process:
    def __init__(
        self,
        pid: ProcessId,
        vset: ValidatorSet,
        timeouts: TimeoutConfig,
        get_value: Optional[ValueSource] = None,
        valid: Validity = accept_all,
        rule_order: RuleOrder = RuleOrder.FIXED,
        rule_seed: int = 0,
        buffer_heights: int = 2,
    ) -> None:
        if pid not in vset:
            raise ValueError(f"process {pid} not in validator set")
        self.pid = pid
        self.vset = vset
        self.timeouts = timeouts
        self.get_value = get_value if get_value is not None else CountingValueSource()
        self.valid = valid
        self.rule_order = RuleOrder(rule_order)
        self._rng = random.Random(rule_seed)
        self.state = ProcessState()
        self.log = MessageLog(vset, buffer_heights=buffer_heights)
        self._once: set = set()
        self._out: List[Output] = []
        self._last_snapshot: Optional[Tuple] = None

    # -- public entry points ---------------------------------------------------

    def handle(self, event: Input) -> List[Output]:
        """Apply one input, then run enabled rules to a fixed point."""
        self._out = []
        if isinstance(event, Start):
            self._start_round(0)
        elif isinstance(event, Deliver):
            self.log.record(event.msg)
        elif isinstance(event, TimeoutExpired):
            self._on_timeout(event.kind, event.height, event.round)
        else:
            raise TypeError(f"unknown input {event!r}")
        self._note_state()
        self._run_rules()
        out, self._out = self._out, []
        return out

    def start(self) -> List[Output]:
        return self.handle(Start())

    def receive(self, msg: Message) -> List[Output]:
        return self.handle(Deliver(msg))

    def start_round(self, round: int) -> List[Output]:
        """StartRound in isolation (no rule evaluation afterwards)."""
        self._out = []
        self._start_round(round)
        self._note_state()
        out, self._out = self._out, []
        return out

    def on_timeout(self, kind: TimeoutKind, height: int, round: int) -> List[Output]:
        return self.handle(TimeoutExpired(TimeoutKind(kind), height, round))

    def on_proposal(self, proposal: Message) -> List[Output]:
        """Deliver ``proposal`` and evaluate rules (propose-step rules included)."""
        return self.receive(proposal)

    def on_prevote_thresholds(self, event: ThresholdEvent) -> List[Output]:
        return self._evaluate_only()

    def on_precommit_thresholds(self, event: ThresholdEvent) -> List[Output]:
        return self._evaluate_only()

    def on_round_skip(self, event: ThresholdEvent) -> List[Output]:
        return self._evaluate_only()

    def _evaluate_only(self) -> List[Output]:
        self._out = []
        self._run_rules()
        out, self._out = self._out, []
        return out

    @property
    def decisions(self) -> Dict[int, Value]:
        return self.state.decisions

    # -- helpers ---------------------------------------------------------------

    def _emit(self, out: Output) -> None:
        self._out.append(out)

    def _broadcast(self, msg: Message) -> None:
        self._emit(Broadcast(msg))
        # own messages count toward thresholds immediately
        self.log.record(msg)

    def _schedule(self, kind: TimeoutKind) -> None:
        s = self.state
        self._emit(ScheduleTimeout(kind, s.height, s.round, self.timeouts.duration(kind, s.round)))

    def _note_state(self) -> None:
        snap = self.state.snapshot()
        if snap != self._last_snapshot:
            self._last_snapshot = snap
            self._emit(StateChanged(snap))

    def _fired(self, rule: str, detail: str = "") -> None:
        self._emit(RuleFired(rule, self.state.height, self.state.round, detail))

    def _proposer(self, round: int) -> ProcessId:
        return proposer(self.vset, self.state.height, round)

    # -- StartRound and timeouts ----------------------------------------------

    def _start_round(self, round: int) -> None:
        s = self.state
        s.round = round
        s.step = Step.PROPOSE
        if self._proposer(round) == self.pid:
            if s.valid_value is not None:
                value = s.valid_value
            else:
                value = self.get_value(s.height, round, self.pid)
            self._broadcast(Message.proposal(s.height, round, value, s.valid_round, self.pid))
        else:
            self._schedule(TimeoutKind.PROPOSE)

    def _on_timeout(self, kind: TimeoutKind, height: int, round: int) -> None:
        s = self.state
        if height != s.height or round != s.round:
            return
        if kind is TimeoutKind.PROPOSE and s.step is Step.PROPOSE:
            self._fired("timeout-propose")
            self._broadcast(Message.prevote(s.height, s.round, NIL, self.pid))
            s.step = Step.PREVOTE
        elif kind is TimeoutKind.PREVOTE and s.step is Step.PREVOTE:
            self._fired("timeout-prevote")
            self._broadcast(Message.precommit(s.height, s.round, NIL, self.pid))
            s.step = Step.PRECOMMIT
        elif kind is TimeoutKind.PRECOMMIT:
            self._fired("timeout-precommit")
            self._start_round(s.round + 1)

    # -- rule evaluation -------------------------------------------------------

    def _run_rules(self) -> None:
        while True:
            candidates = self._enabled()
            if not candidates:
                return
            if self.rule_order is RuleOrder.RANDOM:
                chosen = candidates[self._rng.randrange(len(candidates))]
            else:
                chosen = min(candidates, key=lambda c: (_PRIORITY[c.rule], c.key))
            chosen.fire()
            self._note_state()

    def _enabled(self) -> List[_Candidate]:
        s = self.state
        log = self.log
        h, r = s.height, s.round
        found: List[_Candidate] = []

        # decision: any round of the current height
        if h not in s.decisions:
            for rr, vid in log.precommit_value_quorums():
                key = ("decide", h, rr, vid)
                if key in self._once:
                    continue
                for prop in log.proposals(rr, self._proposer(rr)):
                    if prop.value_id == vid:
                        found.append(_Candidate("decide", (rr,), self._rule_decide(prop, key)))
                        break

        own = self._proposer(r)
        proposals = log.proposals(r, own)

        if s.step is Step.PROPOSE:
            for prop in proposals:
                vr = prop.valid_round
                if vr == -1:
                    found.append(_Candidate("proposal-fresh", (), self._rule_proposal(prop, vr)))
                elif 0 <= vr < r and log.has_prevote_quorum(vr, prop.value_id):
                    found.append(_Candidate("proposal-valid-round", (vr,),
                                            self._rule_proposal(prop, vr)))
        else:
            for prop in proposals:
                key = ("lock", h, r, prop.value_id)
                if (key not in self._once and log.has_prevote_quorum(r, prop.value_id)
                        and self.valid(prop.value)):
                    found.append(_Candidate("lock", (), self._rule_lock(prop, key)))

        if s.step is Step.PREVOTE:
            key = ("prevote-any", h, r)
            if key not in self._once and log.has_prevote_any(r):
                found.append(_Candidate("prevote-any", (), self._rule_prevote_any(key)))
            if log.has_prevote_quorum(r, NIL):
                found.append(_Candidate("prevote-nil-quorum", (), self._rule_prevote_nil))

        key = ("precommit-any", h, r)
        if key not in self._once and log.has_precommit_any(r):
            found.append(_Candidate("precommit-any", (), self._rule_precommit_any(key)))

        for rr in log.skip_rounds_above(r):
            # highest round first under fixed priority
            found.append(_Candidate("skip-round", (-rr,), self._rule_skip(rr)))
        return found

    def _rule_proposal(self, prop: Message, vr: int) -> Callable[[], None]:
        def fire() -> None:
            s = self.state
            v = prop.value
            assert v is not None
            if vr == -1:
                accept = self.valid(v) and (s.locked_round == -1 or s.locked_value == v)
                self._fired("proposal-fresh", "accept" if accept else "reject")
            else:
                accept = self.valid(v) and (s.locked_round <= vr or s.locked_value == v)
                self._fired("proposal-valid-round", "accept" if accept else "reject")
            vid = v.id if accept else NIL
            self._broadcast(Message.prevote(s.height, s.round, vid, self.pid))
            s.step = Step.PREVOTE
        return fire

    def _rule_prevote_any(self, key: Tuple) -> Callable[[], None]:
        def fire() -> None:
            self._once.add(key)
            self._fired("prevote-any")
            self._schedule(TimeoutKind.PREVOTE)
        return fire

    def _rule_lock(self, prop: Message, key: Tuple) -> Callable[[], None]:
        def fire() -> None:
            self._once.add(key)
            s = self.state
            v = prop.value
            assert v is not None
            if s.step is Step.PREVOTE:
                self._fired("lock", "lock")
                s.locked_value = v
                s.locked_round = s.round
                self._broadcast(Message.precommit(s.height, s.round, v.id, self.pid))
                s.step = Step.PRECOMMIT
            else:
                self._fired("lock", "valid-only")
            s.valid_value = v
            s.valid_round = s.round
        return fire

    def _rule_prevote_nil(self) -> None:
        s = self.state
        self._fired("prevote-nil-quorum")
        self._broadcast(Message.precommit(s.height, s.round, NIL, self.pid))
        s.step = Step.PRECOMMIT

    def _rule_precommit_any(self, key: Tuple) -> Callable[[], None]:
        def fire() -> None:
            self._once.add(key)
            self._fired("precommit-any")
            self._schedule(TimeoutKind.PRECOMMIT)
        return fire

    def _rule_decide(self, prop: Message, key: Tuple) -> Callable[[], None]:
        def fire() -> None:
            self._once.add(key)
            s = self.state
            v = prop.value
            assert v is not None
            if not self.valid(v):
                self._fired("anomaly", f"decision on invalid value at round {prop.round}")
                return
            self._fired("decide", f"round {prop.round}")
            h = s.height
            s.decisions[h] = v
            self._emit(Decide(h, prop.round, v))
            self.log.record_decision(prop)
            s.height = h + 1
            s.locked_value, s.locked_round = None, -1
            s.valid_value, s.valid_round = None, -1
            self.log.prune(h)
            self.log.advance(h + 1)
            self._emit(StartHeight(h + 1))
            self._start_round(0)
        return fire

    def _rule_skip(self, round: int) -> Callable[[], None]:
        def fire() -> None:
            self._fired("skip-round", f"to {round}")
            self._start_round(round)
        return fire
