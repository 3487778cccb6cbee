from pathlib import Path

import pytest

from conftest import scenario
from tendermint_sim.adversary import AdversarySpec, Behavior
from tendermint_sim.consensus import RuleOrder
from tendermint_sim.messages import Value
from tendermint_sim.scenario import (
    ScenarioError, load_scenario, parse_scenario, resolve_validity,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

BASE = """
[validators]
powers = {powers}
max_faulty = {f}

[network]
gst = {gst}
delta = 10

[timeouts]
propose = 50
prevote = 25
precommit = 25
delta = 5
"""


def text(powers="1, 1, 1, 1", f=1, gst=0, extra=""):
    return BASE.format(powers=powers, f=f, gst=gst) + extra


class TestParse:
    def test_minimal(self):
        sc = parse_scenario(text())
        assert sc.powers == (1, 1, 1, 1) and sc.max_faulty == 1
        assert sc.gst == 0 and sc.delta == 10 and sc.heights == 1
        assert sc.rule_order is RuleOrder.FIXED and sc.adversaries == ()

    def test_full(self):
        sc = parse_scenario(text(gst="never", extra="""
[run]
heights = 3
rule_order = random
valid = reject-proposer:2
max_rounds = 20

[adversary]
p3 = delayed-release:30  ; withholds everything
"""))
        assert sc.gst is None
        assert sc.heights == 3 and sc.rule_order is RuleOrder.RANDOM and sc.max_rounds == 20
        assert sc.adversaries == ((3, AdversarySpec(Behavior.DELAYED_RELEASE, 30)),)
        assert sc.correct == (0, 1, 2)

    def test_round_trip(self):
        sc = scenario(powers=(3, 2, 2, 1, 1), f=2, gst=40, heights=2, seed=9,
                      adversaries=((1, AdversarySpec(Behavior.SILENT)),))
        assert parse_scenario(sc.to_ini()) == sc

    def test_fingerprint_ignores_seed(self):
        sc = scenario()
        assert sc.fingerprint() == sc.with_seed(5).fingerprint()
        assert sc.fingerprint() != scenario(gst=1).fingerprint()

    @pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.ini")), ids=lambda p: p.stem)
    def test_shipped_scenarios_load(self, path):
        load_scenario(path)


class TestErrors:
    def test_n_le_3f(self):
        with pytest.raises(ScenarioError, match="n > 3f"):
            parse_scenario(text(powers="1, 1, 1"))

    def test_adversary_over_budget(self):
        with pytest.raises(ScenarioError, match="exceeds max_faulty"):
            parse_scenario(text(extra="[adversary]\np0 = silent\np1 = silent\n"))

    def test_weighted_adversary_over_budget(self):
        with pytest.raises(ScenarioError, match="adversary power 2"):
            parse_scenario(text(powers="2, 1, 1, 1", extra="[adversary]\np0 = silent\n"))

    def test_unknown_pid(self):
        with pytest.raises(ScenarioError, match="not a validator"):
            parse_scenario(text(extra="[adversary]\np9 = silent\n"))

    def test_unknown_behavior(self):
        with pytest.raises(ScenarioError, match=r"\[adversary\] p1"):
            parse_scenario(text(extra="[adversary]\np1 = sneaky\n"))

    def test_unknown_key(self):
        with pytest.raises(ScenarioError, match="unknown key 'jitter'"):
            parse_scenario(text(extra="[run]\njitter = 3\n"))

    def test_unknown_section(self):
        with pytest.raises(ScenarioError, match=r"unknown section \[extras\]"):
            parse_scenario(text(extra="[extras]\na = 1\n"))

    def test_missing_key(self):
        with pytest.raises(ScenarioError, match="missing required key 'delta' in \\[network\\]"):
            parse_scenario(text().replace("delta = 10\n", ""))

    def test_non_integer(self):
        with pytest.raises(ScenarioError, match="not an integer"):
            parse_scenario(text(gst="soon"))

    def test_bad_timeouts(self):
        with pytest.raises(ScenarioError, match=r"\[timeouts\]"):
            parse_scenario(text().replace("propose = 50", "propose = 0"))

    def test_malformed_ini(self):
        with pytest.raises(ScenarioError):
            parse_scenario("powers = 1\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(tmp_path / "nope.ini")

    def test_bad_validity_selector(self):
        with pytest.raises(ScenarioError, match="valid"):
            parse_scenario(text(extra="[run]\nvalid = reject-everything\n"))


class TestValidity:
    def test_selectors(self):
        assert resolve_validity("accept-all")(Value(b"garbage:1"))
        assert not resolve_validity("reject-garbage")(Value(b"garbage:1"))
        reject = resolve_validity("reject-proposer:2")
        assert not reject(Value(b"h=0;p=2;n=0"))
        assert reject(Value(b"h=0;p=1;n=0"))

    def test_time_limit_grows_with_heights(self):
        assert scenario(heights=2).time_limit() > scenario(heights=1).time_limit()
        assert scenario(gst=None).time_limit() > scenario(gst=0).time_limit()
