"""Partially synchronous gossip network as a discrete-event queue.

Logical time is integral. A message that a correct process sends, or first
receives, at time ``t`` reaches every correct process strictly before
``max(t, gst) + delta``; nothing is ever lost. Delivery instants are drawn
uniformly from the legal window.

Every draw is keyed by the seed and the content of what is being scheduled
(message, recipient, instant) rather than taken from a shared stream, so the
schedule of one message does not depend on how many other messages were sent
before it. Events at the same instant are ordered by a keyed tiebreak, too.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

from .consensus import TimeoutKind
from .messages import Message
from .validators import ProcessId


@dataclass(frozen=True)
class NetworkParams:
    """``gst=None`` means the network never stabilizes."""

    gst: Optional[int]
    delta: int
    seed: int = 0
    async_delay: Optional[int] = None
    duplicate_rate: float = 0.0
    lossy_pre_gst: float = 0.0

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.gst is not None and self.gst < 0:
            raise ValueError("gst must be non-negative")
        if not 0.0 <= self.duplicate_rate <= 1.0 or not 0.0 <= self.lossy_pre_gst <= 1.0:
            raise ValueError("rates must lie in [0, 1]")

    @property
    def max_async_delay(self) -> int:
        return self.async_delay if self.async_delay is not None else 10 * self.delta

    def deadline(self, t: int) -> int:
        """Last instant at which a message sent or received at ``t`` may arrive."""
        if self.gst is None:
            return t + self.max_async_delay
        return max(t, self.gst) + self.delta - 1


@dataclass(frozen=True)
class DeliverEvent:
    msg: Message
    to: ProcessId


@dataclass(frozen=True)
class TimeoutFire:
    pid: ProcessId
    kind: TimeoutKind
    height: int
    round: int


@dataclass(frozen=True)
class AdversaryAction:
    pid: ProcessId
    payload: Any


SimEvent = Any


def _msg_key(msg: Message) -> Tuple:
    payload = None if msg.value is None else msg.value.payload
    return (msg.kind.value, msg.height, msg.round, msg.sender, msg.value_id.hex(),
            msg.valid_round, payload)


class SimNetwork:
    def __init__(self, params: NetworkParams, n: int, correct: Iterable[ProcessId]) -> None:
        self.params = params
        self.n = n
        self.correct: Set[ProcessId] = set(correct)
        self._salt = f"net:{params.seed}:".encode()
        self._queue: List[Tuple[int, int, int, SimEvent]] = []
        self._seq = 0
        # earliest scheduled arrival per (message, recipient); senders hold at send time
        self._arrival: Dict[Tuple[Message, ProcessId], int] = {}

    def __len__(self) -> int:
        return len(self._queue)

    def _key(self, *parts: Any) -> int:
        """Uniform 64-bit integer keyed by the network seed and ``parts``."""
        h = hashlib.blake2b(self._salt + repr(parts).encode(), digest_size=8)
        return int.from_bytes(h.digest(), "big")

    def _tiebreak(self, event: SimEvent) -> int:
        if isinstance(event, DeliverEvent):
            return self._key("order", _msg_key(event.msg), event.to)
        if isinstance(event, TimeoutFire):
            return self._key("order", event.pid, event.kind.value, event.height, event.round)
        return 0

    def push(self, time: int, event: SimEvent) -> None:
        heapq.heappush(self._queue, (time, self._tiebreak(event), self._seq, event))
        self._seq += 1

    def pop(self) -> Tuple[int, SimEvent]:
        time, _, _, event = heapq.heappop(self._queue)
        return time, event

    def peek_time(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def _deliver_at(self, msg: Message, to: ProcessId, time: int) -> None:
        key = (msg, to)
        prev = self._arrival.get(key)
        if prev is None or time < prev:
            self._arrival[key] = time
        self.push(time, DeliverEvent(msg, to))

    def _draw(self, now: int, bound: int, *key: Any) -> int:
        return now + self._key("delay", now, *key) % (bound - now + 1)

    def _chance(self, rate: float, *key: Any) -> bool:
        return bool(rate) and self._key("chance", *key) < rate * 2.0 ** 64

    def send(self, sender: ProcessId, msg: Message, recipients: Iterable[ProcessId],
             now: int) -> None:
        """Schedule delivery of ``msg`` to each recipient within the legal window."""
        self._arrival.setdefault((msg, sender), now)
        p = self.params
        bound = p.deadline(now)
        mk = _msg_key(msg)
        for q in sorted(set(recipients)):
            if q == sender:
                continue
            if p.gst is not None and now < p.gst and self._chance(p.lossy_pre_gst, "loss", mk, q, now):
                # original lost; redelivered at the latest legal instant
                self._deliver_at(msg, q, bound)
            else:
                self._deliver_at(msg, q, self._draw(now, bound, "send", mk, q))
            if self._chance(p.duplicate_rate, "dup", mk, q, now):
                self._deliver_at(msg, q, self._draw(now, bound, "dup", mk, q))

    def broadcast(self, sender: ProcessId, msg: Message, now: int) -> None:
        self.send(sender, msg, range(self.n), now)

    def relay_on_receive(self, receiver: ProcessId, msg: Message, now: int) -> int:
        """Gossip relay: make every correct process hold ``msg`` by the receiver's deadline.

        Returns the number of deliveries added.
        """
        if receiver not in self.correct:
            return 0
        self._arrival.setdefault((msg, receiver), now)
        bound = self.params.deadline(now)
        mk = _msg_key(msg)
        added = 0
        for q in sorted(self.correct):
            prev = self._arrival.get((msg, q))
            if prev is not None and prev <= bound:
                continue
            self._deliver_at(msg, q, self._draw(now, bound, "relay", mk, receiver, q))
            added += 1
        return added

    def scheduled_arrival(self, msg: Message, to: ProcessId) -> Optional[int]:
        return self._arrival.get((msg, to))
