from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendermint_sim.validators import (
    InvalidValidatorSet, ProposerSchedule, ValidatorSet, proposer, proposer_by_replay,
    quorum_power, selection_counts, skip_power,
)


def vsets(max_n=7, max_power=5):
    @st.composite
    def build(draw):
        powers = draw(st.lists(st.integers(0, max_power), min_size=1, max_size=max_n)
                      .filter(lambda ps: sum(ps) > 0))
        f = draw(st.integers(0, (sum(powers) - 1) // 3))
        return ValidatorSet(tuple(powers), f)
    return build()


class TestConstruction:
    def test_accepts_3f_plus_1(self):
        assert ValidatorSet((1, 1, 1, 1), 1).total_power == 4

    def test_rejects_n_le_3f(self):
        with pytest.raises(InvalidValidatorSet, match="n > 3f"):
            ValidatorSet((1, 1, 1), 1)

    def test_rejects_negative_power(self):
        with pytest.raises(InvalidValidatorSet):
            ValidatorSet((1, -1, 3), 0)

    def test_uniform_default_f(self):
        assert ValidatorSet.uniform(7).max_faulty == 2
        assert ValidatorSet.uniform(4).max_faulty == 1
        assert ValidatorSet.uniform(3).max_faulty == 0

    def test_membership(self):
        vs = ValidatorSet.uniform(4)
        assert 0 in vs and 3 in vs
        assert 4 not in vs and -1 not in vs and "0" not in vs


class TestThresholds:
    @pytest.mark.parametrize("powers,expected", [
        ((1, 1, 1, 1), 3), ((2, 1, 1), 3), ((1,) * 7, 5),
    ])
    def test_quorum_examples(self, powers, expected):
        assert quorum_power(ValidatorSet(powers, 1 if sum(powers) < 7 else 2)) == expected

    @pytest.mark.parametrize("powers,f,expected", [
        ((1, 1, 1, 1), 1, 2), ((1,) * 7, 2, 3), ((3, 1), 1, 2),
    ])
    def test_skip_examples(self, powers, f, expected):
        assert skip_power(ValidatorSet(powers, f)) == expected

    @given(vsets())
    def test_strict_fractions(self, vs):
        total = vs.total_power
        q, s = quorum_power(vs), skip_power(vs)
        assert 3 * q > 2 * total >= 3 * (q - 1)
        assert 3 * s > total >= 3 * (s - 1)

    @given(st.integers(1, 30))
    def test_degenerates_to_2f_plus_1(self, f):
        vs = ValidatorSet.uniform(3 * f + 1, f)
        assert quorum_power(vs) == 2 * f + 1
        assert skip_power(vs) == f + 1

    @given(vsets())
    def test_two_quorums_overlap_in_skip_power(self, vs):
        assert 2 * quorum_power(vs) > vs.total_power + skip_power(vs) - 1


class TestProposer:
    def test_equal_powers_in_order(self):
        vs = ValidatorSet.uniform(4)
        assert [proposer(vs, 0, r) for r in range(4)] == [0, 1, 2, 3]

    def test_weighted_two_of_four(self):
        vs = ValidatorSet((2, 1, 1), 0)
        assert [proposer(vs, 0, r) for r in range(4)].count(0) == 2

    @given(st.integers(0, 100), st.integers(0, 1000))
    def test_period_equal_powers(self, h, r):
        vs = ValidatorSet.uniform(4)
        assert proposer(vs, h, r) == proposer(vs, h, r + 4)

    @settings(max_examples=200)
    @given(vsets(), st.integers(0, 50), st.integers(0, 60))
    def test_fairness_over_any_window(self, vs, h, start):
        counts = selection_counts(vs, h, range(start, start + vs.total_power))
        assert counts == list(vs.powers)

    @settings(max_examples=200)
    @given(vsets(), st.integers(0, 5), st.integers(0, 80))
    def test_cached_matches_replay(self, vs, h, r):
        assert proposer(vs, h, r) == proposer_by_replay(vs, h, r)

    @given(vsets())
    def test_zero_power_never_proposes(self, vs):
        chosen = {proposer(vs, 0, r) for r in range(vs.total_power)}
        assert all(vs.power(p) > 0 for p in chosen)

    def test_pure(self):
        vs = ValidatorSet((5, 3, 1, 1), 3)
        assert [proposer(vs, 2, r) for r in range(20)] == [proposer(vs, 2, r) for r in range(20)]

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            proposer(ValidatorSet.uniform(4), 0, -1)


class TestSchedule:
    @given(vsets(), st.integers(1, 40))
    def test_accumulators_sum_to_zero(self, vs, steps):
        sched = ProposerSchedule.zeroed(vs)
        for _ in range(steps):
            sched.step()
            assert sum(sched.accumulators) == 0

    def test_hand_trace(self):
        # powers (2, 1, 1), total 4:
        # +p -> [2,1,1] pick 0 -> [-2,1,1]; +p -> [0,2,2] pick 1 -> [0,-2,2]
        # +p -> [2,-1,3] pick 2 -> [2,-1,-1]; +p -> [4,0,0] pick 0 -> [0,0,0]
        sched = ProposerSchedule.zeroed(ValidatorSet((2, 1, 1), 0))
        assert [sched.step() for _ in range(4)] == [0, 1, 2, 0]
        assert sched.accumulators == [0, 0, 0]


def quorum_intersections_hold(n: int, f: int) -> bool:
    """Every two quorum-power subsets share a process outside every faulty set of power <= f."""
    vs = ValidatorSet.uniform(n, f)
    q = quorum_power(vs)
    procs = range(n)
    subsets = [frozenset(c) for k in range(n + 1) for c in combinations(procs, k)]
    quorums = [s for s in subsets if len(s) >= q]
    faulty = [s for s in subsets if len(s) <= f]
    for i, a in enumerate(quorums):
        for b in quorums[i:]:
            common = a & b
            if any(not (common - bad) for bad in faulty):
                return False
    return True


class TestQuorumIntersection:
    @pytest.mark.parametrize("n", range(1, 8))
    def test_exhaustive_unit_powers(self, n):
        for f in range((n - 1) // 3 + 1):
            assert quorum_intersections_hold(n, f), (n, f)

    def test_detects_violation_when_threshold_too_low(self):
        # sanity check of the enumerator: with a simple-majority "quorum" the
        # property must fail for n=4, f=1
        n, f = 4, 1
        subsets = [frozenset(c) for k in range(n + 1) for c in combinations(range(n), k)]
        quorums = [s for s in subsets if len(s) >= 2]
        assert any(not ((a & b) - bad) for a in quorums for b in quorums
                   for bad in subsets if len(bad) <= f)
