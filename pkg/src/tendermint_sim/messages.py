"""Values, value identifiers and consensus messages."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .validators import ProcessId


@dataclass(frozen=True, order=True)
class ValueId:
    """Opaque value identifier. ``digest=None`` is the distinguished NIL vote."""

    digest: Optional[bytes] = None

    @property
    def is_nil(self) -> bool:
        return self.digest is None

    def hex(self) -> str:
        return "nil" if self.digest is None else self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> "ValueId":
        return NIL if text == "nil" else cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return "NIL" if self.digest is None else f"ValueId({self.digest[:4].hex()}..)"


NIL = ValueId(None)


def value_id(payload: bytes) -> ValueId:
    return ValueId(hashlib.sha256(payload).digest())


@dataclass(frozen=True)
class Value:
    payload: bytes
    id: ValueId = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", value_id(self.payload))

    def __repr__(self) -> str:
        return f"Value({self.payload!r})"


class MsgKind(str, enum.Enum):
    PROPOSAL = "PROPOSAL"
    PREVOTE = "PREVOTE"
    PRECOMMIT = "PRECOMMIT"


class MalformedMessage(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    """A PROPOSAL, PREVOTE or PRECOMMIT.

    Proposals carry the full value and a valid round; votes carry only a
    value id (possibly NIL).
    """

    kind: MsgKind
    height: int
    round: int
    sender: ProcessId
    value: Optional[Value] = None
    value_id: ValueId = NIL
    valid_round: int = -1

    def __post_init__(self) -> None:
        if self.height < 0 or self.round < 0:
            raise MalformedMessage(f"negative height/round in {self}")
        if self.kind is MsgKind.PROPOSAL:
            if self.value is None:
                raise MalformedMessage("PROPOSAL without a value")
            if not -1 <= self.valid_round < self.round:
                raise MalformedMessage(
                    f"PROPOSAL valid round {self.valid_round} not in [-1, {self.round})"
                )
            object.__setattr__(self, "value_id", self.value.id)
        else:
            if self.value is not None:
                raise MalformedMessage(f"{self.kind.value} must not carry a full value")
            if self.valid_round != -1:
                raise MalformedMessage(f"{self.kind.value} must not carry a valid round")

    @classmethod
    def proposal(cls, height: int, round: int, value: Value, valid_round: int,
                 sender: ProcessId) -> "Message":
        return cls(MsgKind.PROPOSAL, height, round, sender, value=value,
                   valid_round=valid_round)

    @classmethod
    def prevote(cls, height: int, round: int, vid: ValueId, sender: ProcessId) -> "Message":
        return cls(MsgKind.PREVOTE, height, round, sender, value_id=vid)

    @classmethod
    def precommit(cls, height: int, round: int, vid: ValueId, sender: ProcessId) -> "Message":
        return cls(MsgKind.PRECOMMIT, height, round, sender, value_id=vid)

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "kind": self.kind.value,
            "h": self.height,
            "r": self.round,
            "from": self.sender,
            "id": self.value_id.hex(),
        }
        if self.kind is MsgKind.PROPOSAL:
            assert self.value is not None
            d["payload"] = self.value.payload.hex()
            d["vr"] = self.valid_round
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "Message":
        kind = MsgKind(d["kind"])
        if kind is MsgKind.PROPOSAL:
            return cls.proposal(d["h"], d["r"], Value(bytes.fromhex(d["payload"])),
                                d["vr"], d["from"])
        return cls(kind, d["h"], d["r"], d["from"], value_id=ValueId.from_hex(d["id"]))

    def short(self) -> str:
        tail = f" vr={self.valid_round}" if self.kind is MsgKind.PROPOSAL else ""
        return (f"{self.kind.value}(h={self.height}, r={self.round}, "
                f"{self.value_id.hex()[:8]}{tail}) from p{self.sender}")
