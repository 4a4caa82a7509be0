import numpy as np
import pytest

import gearbandit as gb


@pytest.fixture
def model3():
    return gb.random_model(0, 3, 2)


class TestMembership:
    def test_full_accepts_everything(self, model3):
        family = gb.PolicyFamily.full(model3)
        assert family.contains(gb.StationaryPolicy((1, 2, 3), (1, 0, 1)))

    def test_multi_threshold_requires_nondecreasing_gears(self, model3):
        family = gb.PolicyFamily.multi_threshold(model3)
        assert not family.contains(gb.StationaryPolicy((1, 2, 3), (0, 1, 0)))
        assert family.contains(gb.StationaryPolicy((1, 2, 3), (0, 0, 1)))

    def test_explicit_list(self, model3):
        members = [gb.StationaryPolicy.uniform(model3, 0),
                   gb.StationaryPolicy.uniform(model3, 1)]
        family = gb.PolicyFamily.from_policies(model3, members)
        assert family.contains(members[0])
        assert not family.contains(gb.StationaryPolicy((1, 2, 3), (1, 0, 0)))


class TestDownshiftCandidates:
    def test_full_family_lists_all_active_states(self, m1):
        family = gb.PolicyFamily.full(m1)
        top = gb.StationaryPolicy((1, 2), (1, 1))
        assert family.downshift_candidates(top) == [(1, 1), (2, 1)]

    def test_least_element_has_none(self, m1):
        family = gb.PolicyFamily.full(m1)
        assert family.downshift_candidates(gb.StationaryPolicy((1, 2), (0, 0))) == []

    def test_multi_threshold_only_run_heads_descend(self, m1):
        family = gb.PolicyFamily.multi_threshold(m1)
        top = gb.StationaryPolicy((1, 2), (1, 1))
        assert family.downshift_candidates(top) == [(1, 1)]

    def test_candidate_count_for_full_family(self):
        m = gb.random_model(4, 4, 4)
        family = gb.PolicyFamily.full(m)
        for seed in range(6):
            policy = gb.random_policy(seed, m)
            expected = sum(1 for a in policy.gears if a >= 1)
            assert len(family.downshift_candidates(policy)) == expected

    def test_nonmember_rejected(self, model3):
        family = gb.PolicyFamily.multi_threshold(model3)
        with pytest.raises(gb.ConnectednessError):
            family.downshift_candidates(gb.StationaryPolicy((1, 2, 3), (1, 0, 0)))


class TestConnectedness:
    def test_full_family_ok(self, model3):
        report = gb.check_connectedness(gb.PolicyFamily.full(model3), model3)
        assert report.ok and report.exhaustive

    def test_multi_threshold_exhaustive_small(self):
        for n, g in [(4, 3), (6, 4)]:
            m = gb.random_model(n, n, g)
            report = gb.check_connectedness(gb.PolicyFamily.multi_threshold(m), m)
            assert report.ok and report.exhaustive

    def test_list_missing_intermediates_fails(self, m1):
        family = gb.PolicyFamily.from_policies(m1, [
            gb.StationaryPolicy((1, 2), (0, 0)),
            gb.StationaryPolicy((1, 2), (1, 1))])
        report = gb.check_connectedness(family, m1)
        assert not report.ok
        assert report.violation == gb.StationaryPolicy((1, 2), (1, 1))

    def test_missing_extreme_detected(self, m1):
        family = gb.PolicyFamily.from_policies(
            m1, [gb.StationaryPolicy((1, 2), (0, 0))])
        report = gb.check_connectedness(family, m1)
        assert not report.ok

    def test_predicate_family_sampled(self, model3):
        family = gb.PolicyFamily.from_predicate(model3, lambda s: True)
        report = gb.check_connectedness(family, model3, samples=50)
        assert report.ok and not report.exhaustive


class TestWalks:
    @pytest.mark.parametrize("kind", ["full", "multi_threshold"])
    def test_any_downshift_walk_reaches_bottom_in_exact_steps(self, kind):
        m = gb.random_model(1, 4, 4)
        family = (gb.PolicyFamily.full(m) if kind == "full"
                  else gb.PolicyFamily.multi_threshold(m))
        rng = np.random.default_rng(2)
        for _ in range(5):
            policy = family.greatest
            steps = 0
            while policy != family.least:
                cands = family.downshift_candidates(policy)
                assert cands
                s, a = cands[rng.integers(0, len(cands))]
                policy = gb.shift(policy, s, a, a - 1)
                steps += 1
            assert steps == m.top_gear * len(m.controllable_states)

    def test_sampled_members_belong(self, model3):
        family = gb.PolicyFamily.multi_threshold(model3)
        rng = np.random.default_rng(0)
        for _ in range(40):
            assert family.contains(family.sample_member(rng))


class TestSpecParsing:
    def test_known_specs(self, model3):
        assert gb.family_from_spec(model3, "full").kind == "full"
        assert gb.family_from_spec(model3, "multi_threshold").kind == "multi_threshold"

    def test_unknown_spec_raises(self, model3):
        with pytest.raises(ValueError):
            gb.family_from_spec(model3, "mystery")

    def test_list_spec_uses_loader(self, model3):
        members = [gb.StationaryPolicy.uniform(model3, 0)]
        family = gb.family_from_spec(model3, "list:somewhere",
                                     load_policies=lambda path: members)
        assert family.kind == "explicit-list"
