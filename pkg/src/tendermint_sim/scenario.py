"""Scenario files: INI-style sections of ``key = value`` lines.

See ``docs/scenario-format.md`` for the grammar. Loading validates every
constraint up front and reports the offending section and key.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

from .adversary import AdversarySpec
from .consensus import RuleOrder, TimeoutConfig, accept_all
from .messages import Value
from .validators import InvalidValidatorSet, ValidatorSet


class ScenarioError(ValueError):
    pass


PROPOSER_FUNCTIONS = ("weighted-round-robin",)


def _reject_proposer(pid: int) -> Callable[[Value], bool]:
    tag = f";p={pid};".encode()

    def valid(value: Value) -> bool:
        return tag not in value.payload
    return valid


def _reject_garbage(value: Value) -> bool:
    return not value.payload.startswith(b"garbage:")


def resolve_validity(selector: str) -> Callable[[Value], bool]:
    """Map a ``valid`` selector to a predicate over values.

    ``accept-all``, ``reject-garbage`` or ``reject-proposer:<pid>`` (refuses
    values produced by that process's value source).
    """
    name, _, arg = selector.partition(":")
    if name == "accept-all" and not arg:
        return accept_all
    if name == "reject-garbage" and not arg:
        return _reject_garbage
    if name == "reject-proposer" and arg.isdigit():
        return _reject_proposer(int(arg))
    raise ScenarioError(f"unknown valid() selector {selector!r}")


@dataclass(frozen=True)
class Scenario:
    powers: Tuple[int, ...]
    max_faulty: int
    gst: Optional[int]
    delta: int
    timeouts: TimeoutConfig
    heights: int = 1
    seed: int = 0
    adversaries: Tuple[Tuple[int, AdversarySpec], ...] = ()
    rule_order: RuleOrder = RuleOrder.FIXED
    valid: str = "accept-all"
    proposer_function: str = "weighted-round-robin"
    max_rounds: int = 50
    buffer_heights: int = 2
    adversary_cap: int = 16
    duplicate_rate: float = 0.0
    lossy_pre_gst: float = 0.0
    async_delay: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "powers", tuple(self.powers))
        object.__setattr__(self, "adversaries", tuple(sorted(self.adversaries)))
        object.__setattr__(self, "rule_order", RuleOrder(self.rule_order))
        self.validate()

    def validate(self) -> None:
        try:
            vset = ValidatorSet(self.powers, self.max_faulty)
        except InvalidValidatorSet as exc:
            raise ScenarioError(f"[validators] {exc}") from None
        seen = set()
        for pid, _ in self.adversaries:
            if pid not in vset:
                raise ScenarioError(f"[adversary] p{pid} is not a validator (n={vset.size})")
            if pid in seen:
                raise ScenarioError(f"[adversary] p{pid} listed twice")
            seen.add(pid)
        adv_power = vset.power_of(seen)
        if adv_power > self.max_faulty:
            raise ScenarioError(
                f"[adversary] adversary power {adv_power} exceeds max_faulty {self.max_faulty}"
            )
        if self.delta <= 0:
            raise ScenarioError("[network] delta must be positive")
        if self.gst is not None and self.gst < 0:
            raise ScenarioError("[network] gst must be non-negative or 'never'")
        if self.heights < 1:
            raise ScenarioError("[run] heights must be at least 1")
        if self.max_rounds < 1:
            raise ScenarioError("[run] max_rounds must be at least 1")
        if self.proposer_function not in PROPOSER_FUNCTIONS:
            raise ScenarioError(f"[validators] unknown proposer function {self.proposer_function!r}")
        resolve_validity(self.valid)

    @property
    def vset(self) -> ValidatorSet:
        return ValidatorSet(self.powers, self.max_faulty)

    @property
    def byzantine(self) -> Dict[int, AdversarySpec]:
        return dict(self.adversaries)

    @property
    def correct(self) -> Tuple[int, ...]:
        bad = self.byzantine
        return tuple(p for p in range(len(self.powers)) if p not in bad)

    def validity(self) -> Callable[[Value], bool]:
        return resolve_validity(self.valid)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def time_limit(self) -> int:
        """Logical-time cap for a run: gst plus max_rounds worst-case rounds per height."""
        k = self.max_rounds
        t = self.timeouts
        per_round = t.propose(k) + t.prevote(k) + t.precommit(k) + 4 * self.delta
        if self.gst is None:
            per_round += 4 * (self.async_delay if self.async_delay is not None else 10 * self.delta)
        return (self.gst or 0) + self.heights * k * per_round

    # -- (de)serialization ---------------------------------------------------

    def to_ini(self) -> str:
        t = self.timeouts
        lines = [
            "[validators]",
            "powers = " + ", ".join(str(p) for p in self.powers),
            f"max_faulty = {self.max_faulty}",
            f"proposer = {self.proposer_function}",
            "",
            "[network]",
            f"gst = {'never' if self.gst is None else self.gst}",
            f"delta = {self.delta}",
            f"seed = {self.seed}",
            f"duplicate_rate = {self.duplicate_rate!r}",
            f"lossy_pre_gst = {self.lossy_pre_gst!r}",
        ]
        if self.async_delay is not None:
            lines.append(f"async_delay = {self.async_delay}")
        lines += [
            "",
            "[timeouts]",
            f"propose = {t.init_propose}",
            f"prevote = {t.init_prevote}",
            f"precommit = {t.init_precommit}",
            f"delta = {t.delta}",
            "",
            "[run]",
            f"heights = {self.heights}",
            f"rule_order = {self.rule_order.value}",
            f"valid = {self.valid}",
            f"max_rounds = {self.max_rounds}",
            f"buffer_heights = {self.buffer_heights}",
            f"adversary_cap = {self.adversary_cap}",
        ]
        if self.adversaries:
            lines += ["", "[adversary]"]
            lines += [f"p{pid} = {spec}" for pid, spec in self.adversaries]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        """Digest of everything except the seed (which the trace header carries separately)."""
        text = replace(self, seed=0).to_ini()
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_KNOWN = {
    "validators": {"powers", "max_faulty", "proposer"},
    "network": {"gst", "delta", "seed", "duplicate_rate", "lossy_pre_gst", "async_delay"},
    "timeouts": {"propose", "prevote", "precommit", "delta"},
    "run": {"heights", "rule_order", "valid", "max_rounds", "buffer_heights", "adversary_cap"},
    "adversary": None,
}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from None

    for section in cp.sections():
        if section not in _KNOWN:
            raise ScenarioError(f"{source}: unknown section [{section}]")
        allowed = _KNOWN[section]
        if allowed is not None:
            for key in cp[section]:
                if key not in allowed:
                    raise ScenarioError(f"{source}: unknown key {key!r} in [{section}]")

    def need(section: str, key: str) -> str:
        if not cp.has_option(section, key):
            raise ScenarioError(f"{source}: missing required key {key!r} in [{section}]")
        return cp.get(section, key)

    def as_int(section: str, key: str, raw: str) -> int:
        try:
            return int(raw)
        except ValueError:
            raise ScenarioError(f"{source}: [{section}] {key} = {raw!r} is not an integer") from None

    def opt_int(section: str, key: str, default):
        if not cp.has_option(section, key):
            return default
        return as_int(section, key, cp.get(section, key))

    def opt_float(section: str, key: str, default: float) -> float:
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ScenarioError(f"{source}: [{section}] {key} = {raw!r} is not a number") from None

    raw_powers = need("validators", "powers")
    powers = tuple(as_int("validators", "powers", p.strip()) for p in raw_powers.split(",")
                   if p.strip())
    max_faulty = as_int("validators", "max_faulty", need("validators", "max_faulty"))

    raw_gst = need("network", "gst").strip()
    gst = None if raw_gst.lower() in ("never", "inf", "infinity") else as_int("network", "gst", raw_gst)

    try:
        timeouts = TimeoutConfig(
            as_int("timeouts", "propose", need("timeouts", "propose")),
            as_int("timeouts", "prevote", need("timeouts", "prevote")),
            as_int("timeouts", "precommit", need("timeouts", "precommit")),
            as_int("timeouts", "delta", need("timeouts", "delta")),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{source}: [timeouts] {exc}") from None

    adversaries = []
    if cp.has_section("adversary"):
        for key, raw in cp["adversary"].items():
            if not (key.startswith("p") and key[1:].isdigit()):
                raise ScenarioError(f"{source}: [adversary] key {key!r} must look like p<index>")
            try:
                adversaries.append((int(key[1:]), AdversarySpec.parse(raw)))
            except ValueError as exc:
                raise ScenarioError(f"{source}: [adversary] {key} = {raw!r}: {exc}") from None

    run = "run"
    try:
        return Scenario(
            powers=powers,
            max_faulty=max_faulty,
            gst=gst,
            delta=as_int("network", "delta", need("network", "delta")),
            timeouts=timeouts,
            heights=opt_int(run, "heights", 1),
            seed=opt_int("network", "seed", 0),
            adversaries=tuple(adversaries),
            rule_order=cp.get(run, "rule_order", fallback="fixed").strip(),
            valid=cp.get(run, "valid", fallback="accept-all").strip(),
            proposer_function=cp.get("validators", "proposer",
                                     fallback="weighted-round-robin").strip(),
            max_rounds=opt_int(run, "max_rounds", 50),
            buffer_heights=opt_int(run, "buffer_heights", 2),
            adversary_cap=opt_int(run, "adversary_cap", 16),
            duplicate_rate=opt_float("network", "duplicate_rate", 0.0),
            lossy_pre_gst=opt_float("network", "lossy_pre_gst", 0.0),
            async_delay=opt_int("network", "async_delay", None),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(), source=str(path))
