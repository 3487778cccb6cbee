"""Per-process message log with voting-power aggregation.

The log tracks one height at a time. Messages for the next few heights are
buffered raw and replayed when the log advances; older heights are dropped.
Every threshold the consensus rules care about is detected incrementally and
reported exactly once, the first time it becomes true.
"""

from __future__ import annotations

import enum
from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Set, Tuple

from .messages import NIL, Message, MsgKind, ValueId
from .validators import ProcessId, ValidatorSet, quorum_power, skip_power


class ThresholdKind(str, enum.Enum):
    PROPOSAL = "ProposalReceived"
    PREVOTE_VALUE = "QuorumPrevoteValue"
    PREVOTE_NIL = "QuorumPrevoteNil"
    PREVOTE_ANY = "QuorumPrevoteAny"
    PRECOMMIT_VALUE = "QuorumPrecommitValue"
    PRECOMMIT_ANY = "QuorumPrecommitAny"
    SKIP_ROUND = "SkipRound"


@dataclass(frozen=True, order=True)
class ThresholdEvent:
    """A threshold condition over the log.

    ``value_id`` is set for value quorums and proposals; ``sender`` and
    ``valid_round`` only for proposals.
    """

    kind: ThresholdKind
    height: int
    round: int
    value_id: Optional[ValueId] = None
    sender: Optional[ProcessId] = None
    valid_round: Optional[int] = None

    def __repr__(self) -> str:
        extra = "" if self.value_id is None else f", {self.value_id!r}"
        return f"{self.kind.value}(h={self.height}, r={self.round}{extra})"


def QuorumPrevoteValue(height: int, round: int, vid: ValueId) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.PREVOTE_VALUE, height, round, vid)


def QuorumPrevoteNil(height: int, round: int) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.PREVOTE_NIL, height, round)


def QuorumPrevoteAny(height: int, round: int) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.PREVOTE_ANY, height, round)


def QuorumPrecommitValue(height: int, round: int, vid: ValueId) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.PRECOMMIT_VALUE, height, round, vid)


def QuorumPrecommitAny(height: int, round: int) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.PRECOMMIT_ANY, height, round)


def SkipRound(height: int, round: int) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.SKIP_ROUND, height, round)


def ProposalReceived(msg: Message) -> ThresholdEvent:
    return ThresholdEvent(ThresholdKind.PROPOSAL, msg.height, msg.round, msg.value_id,
                          msg.sender, msg.valid_round)


@dataclass(frozen=True)
class EquivocationEvidence:
    sender: ProcessId
    first: Message
    second: Message


@dataclass(frozen=True)
class DecisionCertificate:
    """The proposal and precommit quorum that justified a decision."""

    height: int
    round: int
    proposal: Message
    precommits: Tuple[Message, ...]


class UnknownSender(ValueError):
    pass


class LogError(RuntimeError):
    pass


_VOTES = (MsgKind.PREVOTE, MsgKind.PRECOMMIT)


@dataclass
class MessageLog:
    vset: ValidatorSet
    height: int = 0
    buffer_heights: int = 2
    buffer_size: int = 4096

    def __post_init__(self) -> None:
        self._quorum = quorum_power(self.vset)
        self._skip = skip_power(self.vset)
        self._buffer: Deque[Message] = deque(maxlen=self.buffer_size)
        self._evidence: List[EquivocationEvidence] = []
        self._evidence_keys: Set[Tuple[ProcessId, MsgKind, int, int]] = set()
        self._decisions: Dict[int, Message] = {}
        self._certificates: Dict[int, DecisionCertificate] = {}
        self._pruned: Set[int] = set()
        self._reset_height_state()

    def _reset_height_state(self) -> None:
        # first vote per (kind, round, sender), kept for equivocation evidence
        self._first_votes: Dict[Tuple[MsgKind, int, ProcessId], Message] = {}
        # counted votes per (kind, round, vid): a sender counts once per value id
        self._votes: Dict[Tuple[MsgKind, int, ValueId], Dict[ProcessId, Message]] = (
            defaultdict(dict))
        # all distinct proposals per (round, sender), in arrival order
        self._proposals: Dict[Tuple[int, ProcessId], List[Message]] = defaultdict(list)
        self._power: Counter = Counter()      # (kind, round, vid) -> power
        self._any_power: Counter = Counter()  # (kind, round) -> power
        self._round_senders: Dict[int, Set[ProcessId]] = defaultdict(set)
        self._round_power: Counter = Counter()
        self._fired: Set[ThresholdEvent] = set()
        self._value_quorums: Dict[MsgKind, Set[Tuple[int, ValueId]]] = {k: set() for k in _VOTES}
        self._skip_rounds: Set[int] = set()

    # -- recording -------------------------------------------------------

    def record(self, msg: Message) -> List[ThresholdEvent]:
        """Store ``msg``; return the thresholds it newly satisfies."""
        if msg.sender not in self.vset:
            raise UnknownSender(f"message from unknown sender {msg.sender}: {msg.short()}")
        if msg.height < self.height or msg.height in self._pruned:
            return []
        if msg.height > self.height:
            if msg.height <= self.height + self.buffer_heights:
                self._buffer.append(msg)
            return []
        return self._record_current(msg)

    def _record_current(self, msg: Message) -> List[ThresholdEvent]:
        events: List[ThresholdEvent] = []
        h, r, sender = msg.height, msg.round, msg.sender
        power = self.vset.power(sender)

        if msg.kind is MsgKind.PROPOSAL:
            stored = self._proposals[(r, sender)]
            if msg in stored:
                return []
            if stored:
                self._add_evidence(stored[0], msg)
            stored.append(msg)
            self._fire(ProposalReceived(msg), events)
        else:
            key = (msg.kind, r, sender)
            first = self._first_votes.get(key)
            if first is None:
                self._first_votes[key] = msg
                self._any_power[(msg.kind, r)] += power
            elif first != msg:
                self._add_evidence(first, msg)
            by_sender = self._votes[(msg.kind, r, msg.value_id)]
            if sender in by_sender:
                return events
            # An equivocator counts toward every id it signed; otherwise a correct
            # process holding the same messages as its peers could miss their quorum.
            by_sender[sender] = msg
            self._power[(msg.kind, r, msg.value_id)] += power
            if self._power[(msg.kind, r, msg.value_id)] >= self._quorum:
                if msg.value_id.is_nil:
                    if msg.kind is MsgKind.PREVOTE:
                        self._fire(QuorumPrevoteNil(h, r), events)
                else:
                    if msg.kind is MsgKind.PREVOTE:
                        ev = QuorumPrevoteValue(h, r, msg.value_id)
                    else:
                        ev = QuorumPrecommitValue(h, r, msg.value_id)
                    if self._fire(ev, events):
                        self._value_quorums[msg.kind].add((r, msg.value_id))
            if self._any_power[(msg.kind, r)] >= self._quorum:
                if msg.kind is MsgKind.PREVOTE:
                    self._fire(QuorumPrevoteAny(h, r), events)
                else:
                    self._fire(QuorumPrecommitAny(h, r), events)

        senders = self._round_senders[r]
        if sender not in senders:
            senders.add(sender)
            self._round_power[r] += power
            if self._round_power[r] >= self._skip and self._fire(SkipRound(h, r), events):
                self._skip_rounds.add(r)
        return events

    def _fire(self, ev: ThresholdEvent, out: List[ThresholdEvent]) -> bool:
        if ev in self._fired:
            return False
        self._fired.add(ev)
        out.append(ev)
        return True

    def _add_evidence(self, first: Message, second: Message) -> None:
        key = (first.sender, first.kind, first.height, first.round)
        if key in self._evidence_keys:
            return
        self._evidence_keys.add(key)
        self._evidence.append(EquivocationEvidence(first.sender, first, second))

    # -- queries -----------------------------------------------------------

    def query(self, ev: ThresholdEvent) -> bool:
        """Whether the threshold condition ``ev`` currently holds."""
        if ev.height != self.height:
            return False
        if ev.kind is ThresholdKind.PROPOSAL:
            return any(m.value_id == ev.value_id and m.valid_round == ev.valid_round
                       for m in self._proposals.get((ev.round, ev.sender), ()))
        return ev in self._fired

    def fired(self) -> Set[ThresholdEvent]:
        return set(self._fired)

    def proposals(self, round: int, sender: ProcessId) -> List[Message]:
        return list(self._proposals.get((round, sender), ()))

    def has_prevote_quorum(self, round: int, vid: ValueId) -> bool:
        if vid.is_nil:
            return QuorumPrevoteNil(self.height, round) in self._fired
        return QuorumPrevoteValue(self.height, round, vid) in self._fired

    def has_precommit_quorum(self, round: int, vid: ValueId) -> bool:
        return QuorumPrecommitValue(self.height, round, vid) in self._fired

    def has_prevote_any(self, round: int) -> bool:
        return QuorumPrevoteAny(self.height, round) in self._fired

    def has_precommit_any(self, round: int) -> bool:
        return QuorumPrecommitAny(self.height, round) in self._fired

    def skip_rounds_above(self, round: int) -> List[int]:
        return sorted(r for r in self._skip_rounds if r > round)

    def precommit_value_quorums(self) -> List[Tuple[int, ValueId]]:
        return sorted(self._value_quorums[MsgKind.PRECOMMIT])

    def counted_votes(self) -> List[Message]:
        return [m for by_sender in self._votes.values() for m in by_sender.values()]

    def evidence(self) -> List[EquivocationEvidence]:
        return list(self._evidence)

    def buffered(self) -> List[Message]:
        return list(self._buffer)

    # -- height management -------------------------------------------------

    def record_decision(self, proposal: Message) -> None:
        """Remember the proposal a decision was taken on (needed by :meth:`prune`)."""
        prev = self._decisions.get(proposal.height)
        if prev is not None and prev != proposal:
            raise LogError(f"conflicting decision already recorded for height {proposal.height}")
        self._decisions[proposal.height] = proposal

    def certificate(self, height: int) -> Optional[DecisionCertificate]:
        return self._certificates.get(height)

    def prune(self, decided_height: int) -> "MessageLog":
        """Drop state for ``decided_height`` except its decision certificate."""
        if decided_height not in self._decisions:
            raise LogError(f"cannot prune height {decided_height}: no decision recorded")
        if decided_height in self._pruned:
            return self
        if decided_height == self.height:
            prop = self._decisions[decided_height]
            round, vid = prop.round, prop.value_id
            by_sender = self._votes.get((MsgKind.PRECOMMIT, round, vid), {})
            pcs = tuple(by_sender[p] for p in sorted(by_sender))
            self._certificates[decided_height] = DecisionCertificate(
                decided_height, round, prop, pcs)
            self._reset_height_state()
        self._pruned.add(decided_height)
        return self

    def advance(self, height: int) -> List[ThresholdEvent]:
        """Move to ``height``, replaying buffered messages for it."""
        if height <= self.height:
            raise LogError(f"log height can only increase ({self.height} -> {height})")
        if self.height not in self._pruned:
            self._reset_height_state()
        self.height = height
        pending = [m for m in self._buffer if m.height >= height]
        self._buffer.clear()
        events: List[ThresholdEvent] = []
        for m in pending:
            events.extend(self.record(m))
        return events


__all__ = [
    "DecisionCertificate", "EquivocationEvidence", "LogError", "MessageLog", "NIL",
    "ProposalReceived", "QuorumPrecommitAny", "QuorumPrecommitValue", "QuorumPrevoteAny",
    "QuorumPrevoteNil", "QuorumPrevoteValue", "SkipRound", "ThresholdEvent", "ThresholdKind",
    "UnknownSender",
]
