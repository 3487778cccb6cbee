"""Validator identities, voting power thresholds and proposer selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Sequence, Tuple

ProcessId = int


class InvalidValidatorSet(ValueError):
    pass


@dataclass(frozen=True)
class ValidatorSet:
    """Fixed set of processes with integer voting powers.

    ``max_faulty`` is the bound ``f`` on the total power of faulty processes.
    Construction fails unless ``total_power > 3 * max_faulty``.
    """

    powers: Tuple[int, ...]
    max_faulty: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "powers", tuple(int(p) for p in self.powers))
        if not self.powers:
            raise InvalidValidatorSet("validator set is empty")
        if any(p < 0 for p in self.powers):
            raise InvalidValidatorSet(f"negative voting power in {list(self.powers)}")
        if self.max_faulty < 0:
            raise InvalidValidatorSet("max_faulty must be non-negative")
        if self.total_power <= 3 * self.max_faulty:
            raise InvalidValidatorSet(
                f"n > 3f violated: total power {self.total_power} <= 3 * {self.max_faulty}"
            )

    @classmethod
    def uniform(cls, n: int, max_faulty: int | None = None) -> "ValidatorSet":
        """``n`` unit-power processes; ``f`` defaults to the largest value with n > 3f."""
        if max_faulty is None:
            max_faulty = (n - 1) // 3
        return cls(tuple([1] * n), max_faulty)

    @property
    def size(self) -> int:
        return len(self.powers)

    @property
    def total_power(self) -> int:
        return sum(self.powers)

    def power(self, pid: ProcessId) -> int:
        return self.powers[pid]

    def __contains__(self, pid: object) -> bool:
        return isinstance(pid, int) and 0 <= pid < len(self.powers)

    def ids(self) -> range:
        return range(len(self.powers))

    def power_of(self, pids) -> int:
        return sum(self.powers[p] for p in set(pids))

    @cached_property
    def _period(self) -> Tuple[ProcessId, ...]:
        schedule = ProposerSchedule.zeroed(self)
        return tuple(schedule.step() for _ in range(self.total_power))


def quorum_power(vset: ValidatorSet) -> int:
    """Smallest power strictly greater than two thirds of the total (2f+1 at n=3f+1)."""
    return 2 * vset.total_power // 3 + 1


def skip_power(vset: ValidatorSet) -> int:
    """Smallest power strictly greater than one third of the total (f+1 at n=3f+1)."""
    return vset.total_power // 3 + 1


@dataclass
class ProposerSchedule:
    """Weighted round-robin state: one signed priority accumulator per process.

    Each step adds every process's power to its accumulator, picks the largest
    accumulator (lowest index on ties) and charges the winner the total power.
    Accumulators therefore always sum to zero between steps.
    """

    vset: ValidatorSet
    accumulators: List[int] = field(default_factory=list)

    @classmethod
    def zeroed(cls, vset: ValidatorSet) -> "ProposerSchedule":
        return cls(vset, [0] * vset.size)

    def step(self) -> ProcessId:
        acc = self.accumulators
        for i, p in enumerate(self.vset.powers):
            acc[i] += p
        winner = max(range(len(acc)), key=lambda i: (acc[i], -i))
        acc[winner] -= self.vset.total_power
        return winner


def proposer(vset: ValidatorSet, height: int, round: int) -> ProcessId:
    """Proposer for ``(height, round)``.

    Equivalent to replaying ``round + 1`` schedule steps from zeroed
    accumulators. A zeroed schedule returns to zero after ``total_power``
    steps, so one cached period answers every round.
    """
    if height < 0 or round < 0:
        raise ValueError(f"height and round must be non-negative, got ({height}, {round})")
    period = vset._period
    return period[round % len(period)]


def proposer_by_replay(vset: ValidatorSet, height: int, round: int) -> ProcessId:
    """Uncached reference path for :func:`proposer`."""
    schedule = ProposerSchedule.zeroed(vset)
    winner = 0
    for _ in range(round + 1):
        winner = schedule.step()
    return winner


def selection_counts(vset: ValidatorSet, height: int, rounds: Sequence[int]) -> List[int]:
    counts = [0] * vset.size
    for r in rounds:
        counts[proposer(vset, height, r)] += 1
    return counts
