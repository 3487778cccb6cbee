"""Deterministic simulation of Tendermint BFT consensus with property checkers."""

from .checkers import CHECKERS, Verdict, run_checks
from .consensus import Process, ProcessState, RuleOrder, Step, TimeoutConfig, TimeoutKind
from .harness import FuzzReport, fuzz, replay
from .messages import NIL, Message, MsgKind, Value, ValueId, value_id
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .simulation import Simulation, run_scenario
from .trace import Trace
from .validators import ValidatorSet, proposer, quorum_power, skip_power
from .votekeeper import MessageLog

__version__ = "0.1.0"

__all__ = [
    "CHECKERS", "FuzzReport", "Message", "MessageLog", "MsgKind", "NIL", "Process",
    "ProcessState", "RuleOrder", "Scenario", "ScenarioError", "Simulation", "Step",
    "TimeoutConfig", "TimeoutKind", "Trace", "ValidatorSet", "Value", "ValueId", "Verdict",
    "fuzz", "load_scenario", "parse_scenario", "proposer", "quorum_power", "replay",
    "run_checks", "run_scenario", "skip_power", "value_id",
]
