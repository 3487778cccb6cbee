import random
from typing import Dict, List

import pytest

from tendermint_sim.adversary import AdversarySpec, Behavior
from tendermint_sim.consensus import RuleOrder, TimeoutConfig
from tendermint_sim.scenario import Scenario

DELTA = 10
# propose(r) > 2*delta + precommit(r-1) and prevote, precommit > 2*delta for every r
TIMEOUTS = TimeoutConfig(50, 25, 25, 5)

# criterion number -> (description, passed), filled by test_acceptance
ACCEPTANCE: Dict[int, tuple] = {}


def scenario(powers=(1, 1, 1, 1), f=1, gst=0, **kw) -> Scenario:
    kw.setdefault("delta", DELTA)
    kw.setdefault("timeouts", TIMEOUTS)
    return Scenario(powers=tuple(powers), max_faulty=f, gst=gst, **kw)


BEHAVIORS: List[Behavior] = [
    Behavior.SILENT, Behavior.EQUIVOCATING_PROPOSER, Behavior.CONFLICTING_VOTER,
    Behavior.RANDOM_GARBAGE, Behavior.DELAYED_RELEASE,
]


def spec_for(behavior: Behavior) -> AdversarySpec:
    bound = 3 * DELTA if behavior is Behavior.DELAYED_RELEASE else 0
    return AdversarySpec(behavior, bound)


def fault_scenario(seed: int, heights: int = 2, behaviors=BEHAVIORS,
                   rule_order: RuleOrder = RuleOrder.FIXED) -> Scenario:
    """n=4, f=1, one Byzantine process cycling through ``behaviors``, gst in [0, 10*delta]."""
    rng = random.Random(f"fault:{seed}")
    behavior = behaviors[seed % len(behaviors)]
    adversaries = () if behavior is None else ((rng.randrange(4), spec_for(behavior)),)
    return scenario(gst=rng.randint(0, 10 * DELTA), seed=seed, heights=heights,
                    adversaries=adversaries, rule_order=rule_order)


@pytest.fixture
def happy():
    return scenario(heights=1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        desc, ok = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {desc}")
