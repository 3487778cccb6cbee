"""Append-only run trace, serialized as one JSON object per line.

Every record has ``t`` (logical time), ``p`` (process id, -1 for run-level
records) and ``k`` (record kind); the remaining keys depend on the kind and
are listed in ``docs/trace-format.md``. Keys are written sorted so equal
traces serialize to equal bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional

RECORD_KINDS = (
    "header", "send", "deliver", "rule-fire", "timeout-schedule", "timeout-fire",
    "state-change", "decide", "evidence", "end",
)

TRACE_VERSION = 1


def encode_record(rec: Dict[str, Any]) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


class Trace:
    def __init__(self, records: Optional[Iterable[Dict[str, Any]]] = None) -> None:
        self.records: List[Dict[str, Any]] = list(records or [])

    def add(self, t: int, p: int, kind: str, /, **payload: Any) -> None:
        if kind not in RECORD_KINDS:
            raise ValueError(f"unknown trace record kind {kind!r}")
        rec = {"t": t, "p": p, "k": kind}
        rec.update(payload)
        self.records.append(rec)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, *kinds: str) -> List[Dict[str, Any]]:
        return [r for r in self.records if r["k"] in kinds]

    @property
    def header(self) -> Dict[str, Any]:
        if not self.records or self.records[0]["k"] != "header":
            raise ValueError("trace has no header record")
        return self.records[0]

    @property
    def status(self) -> Optional[str]:
        if self.records and self.records[-1]["k"] == "end":
            return self.records[-1]["status"]
        return None

    @property
    def end_time(self) -> int:
        return self.records[-1]["t"] if self.records else 0

    def lines(self) -> List[str]:
        return [encode_record(r) for r in self.records]

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    @classmethod
    def loads(cls, text: str) -> "Trace":
        return cls(json.loads(line) for line in text.splitlines() if line.strip())

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path) -> "Trace":
        return cls.loads(Path(path).read_text())
