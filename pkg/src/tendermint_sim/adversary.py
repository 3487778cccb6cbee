"""Byzantine behaviors.

An adversary reacts to simulator callbacks by returning actions: :class:`Send`
(a message and its recipients, ``None`` for everyone) or :class:`Timer`
(a delayed callback to :meth:`Adversary.on_action`). Behaviors that imitate
protocol participation drive a shadow :class:`Process` and rewrite its output.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Union

from .consensus import Broadcast, Process, ScheduleTimeout, TimeoutConfig, TimeoutExpired
from .messages import NIL, Message, MsgKind, Value, value_id
from .validators import ProcessId, ValidatorSet


class Behavior(str, enum.Enum):
    SILENT = "silent"
    EQUIVOCATING_PROPOSER = "equivocating-proposer"
    CONFLICTING_VOTER = "conflicting-voter"
    RANDOM_GARBAGE = "random-garbage"
    DELAYED_RELEASE = "delayed-release"


@dataclass(frozen=True)
class AdversarySpec:
    behavior: Behavior
    bound: int = 0  # release bound for delayed-release

    def __str__(self) -> str:
        if self.behavior is Behavior.DELAYED_RELEASE:
            return f"{self.behavior.value}:{self.bound}"
        return self.behavior.value

    @classmethod
    def parse(cls, text: str) -> "AdversarySpec":
        name, _, arg = text.strip().partition(":")
        behavior = Behavior(name.strip())
        if behavior is Behavior.DELAYED_RELEASE:
            if not arg:
                raise ValueError("delayed-release needs a bound, e.g. delayed-release:30")
            bound = int(arg)
            if bound < 0:
                raise ValueError("delayed-release bound must be non-negative")
            return cls(behavior, bound)
        if arg:
            raise ValueError(f"{behavior.value} takes no argument")
        return cls(behavior)


@dataclass(frozen=True)
class Send:
    msg: Message
    recipients: Optional[Sequence[ProcessId]] = None


@dataclass(frozen=True)
class Timer:
    delay: int
    payload: Any


Action = Union[Send, Timer]


class Adversary:
    behavior = Behavior.SILENT

    def __init__(self, pid: ProcessId, vset: ValidatorSet, timeouts: TimeoutConfig,
                 correct: Sequence[ProcessId], rng: random.Random,
                 buffer_heights: int = 2) -> None:
        self.pid = pid
        self.vset = vset
        self.timeouts = timeouts
        self.correct = sorted(correct)
        self.rng = rng
        self.buffer_heights = buffer_heights

    def on_start(self, now: int) -> List[Action]:
        return []

    def on_deliver(self, msg: Message, now: int) -> List[Action]:
        return []

    def on_action(self, payload: Any, now: int) -> List[Action]:
        return []


class Silent(Adversary):
    behavior = Behavior.SILENT


class _Shadowed(Adversary):
    """Runs the honest algorithm internally and lets subclasses rewrite broadcasts."""

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.shadow = Process(self.pid, self.vset, self.timeouts,
                              buffer_heights=self.buffer_heights)

    def _translate(self, outputs) -> List[Action]:
        actions: List[Action] = []
        for out in outputs:
            if isinstance(out, Broadcast):
                actions.extend(self.rewrite(out.msg))
            elif isinstance(out, ScheduleTimeout):
                actions.append(Timer(out.duration, ("timeout", out.kind, out.height, out.round)))
        return actions

    def rewrite(self, msg: Message) -> List[Action]:
        return [Send(msg)]

    def split(self) -> tuple:
        half = (len(self.correct) + 1) // 2
        return self.correct[:half], self.correct[half:]

    def on_start(self, now: int) -> List[Action]:
        return self._translate(self.shadow.start())

    def on_deliver(self, msg: Message, now: int) -> List[Action]:
        return self._translate(self.shadow.receive(msg))

    def on_action(self, payload: Any, now: int) -> List[Action]:
        if payload[0] == "timeout":
            _, kind, h, r = payload
            return self._translate(self.shadow.handle(TimeoutExpired(kind, h, r)))
        return []


class EquivocatingProposer(_Shadowed):
    """Sends two different proposals for the same (height, round) to disjoint halves."""

    behavior = Behavior.EQUIVOCATING_PROPOSER

    def rewrite(self, msg: Message) -> List[Action]:
        if msg.kind is not MsgKind.PROPOSAL:
            return [Send(msg)]
        assert msg.value is not None
        other = Value(b"equivocation:" + msg.value.payload)
        twin = Message.proposal(msg.height, msg.round, other, msg.valid_round, msg.sender)
        left, right = self.split()
        return [Send(msg, left), Send(twin, right)]


class ConflictingVoter(_Shadowed):
    """Votes for two different ids in the same round, one per half of the network."""

    behavior = Behavior.CONFLICTING_VOTER

    def rewrite(self, msg: Message) -> List[Action]:
        if msg.kind is MsgKind.PROPOSAL:
            return [Send(msg)]
        if msg.value_id.is_nil:
            alt = value_id(f"conflict:{msg.height}:{msg.round}".encode())
        else:
            alt = NIL
        twin = Message(msg.kind, msg.height, msg.round, msg.sender, value_id=alt)
        left, right = self.split()
        return [Send(msg, left), Send(twin, right)]


class DelayedRelease(_Shadowed):
    """Honest content, but every message is withheld for up to ``bound`` time units."""

    behavior = Behavior.DELAYED_RELEASE

    def __init__(self, *args: Any, bound: int = 0, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.bound = bound

    def rewrite(self, msg: Message) -> List[Action]:
        return [Timer(self.rng.randint(0, self.bound), ("release", msg))]

    def on_action(self, payload: Any, now: int) -> List[Action]:
        if payload[0] == "release":
            return [Send(payload[1])]
        return super().on_action(payload, now)


class RandomGarbage(Adversary):
    """Emits syntactically valid messages with random fields to random recipients.

    Heights stay within the receivers' buffering window and rounds within two
    of the highest round observed, so the messages are at least processed.
    """

    behavior = Behavior.RANDOM_GARBAGE

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.height = 0
        self.round = 0
        self.values: List[Value] = []

    def on_start(self, now: int) -> List[Action]:
        return [self._garbage()]

    def on_deliver(self, msg: Message, now: int) -> List[Action]:
        if msg.height > self.height:
            self.height, self.round = msg.height, msg.round
        elif msg.height == self.height:
            self.round = max(self.round, msg.round)
        if msg.value is not None and len(self.values) < 64:
            self.values.append(msg.value)
        return [self._garbage()]

    def _garbage(self) -> Send:
        rng = self.rng
        h = self.height + rng.randint(0, self.buffer_heights)
        r = rng.randint(0, self.round + 2)
        kind = rng.choice(list(MsgKind))
        if self.values and rng.random() < 0.5:
            value = rng.choice(self.values)
        else:
            value = Value(b"garbage:%d" % rng.getrandbits(32))
        if kind is MsgKind.PROPOSAL:
            msg = Message.proposal(h, r, value, rng.randint(-1, r - 1), self.pid)
        else:
            vid = NIL if rng.random() < 0.3 else value.id
            msg = Message(kind, h, r, self.pid, value_id=vid)
        k = rng.randint(1, len(self.correct))
        return Send(msg, sorted(rng.sample(self.correct, k)))


_BEHAVIORS = {
    Behavior.SILENT: Silent,
    Behavior.EQUIVOCATING_PROPOSER: EquivocatingProposer,
    Behavior.CONFLICTING_VOTER: ConflictingVoter,
    Behavior.RANDOM_GARBAGE: RandomGarbage,
    Behavior.DELAYED_RELEASE: DelayedRelease,
}


def make_adversary(spec: AdversarySpec, pid: ProcessId, vset: ValidatorSet,
                   timeouts: TimeoutConfig, correct: Sequence[ProcessId], seed: int,
                   buffer_heights: int = 2) -> Adversary:
    rng = random.Random(f"adversary:{seed}:{pid}")
    cls = _BEHAVIORS[spec.behavior]
    kwargs = {"bound": spec.bound} if spec.behavior is Behavior.DELAYED_RELEASE else {}
    return cls(pid, vset, timeouts, correct, rng, buffer_heights=buffer_heights, **kwargs)
