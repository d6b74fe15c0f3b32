"""
Tests for scheduling policies: completion times, cost keys, feasibility
"""

from fractions import Fraction

import numpy as np
import pytest

from dynamics import random_assignment
from instance_model import (
    Assignment,
    AssignmentError,
    Instance,
    StrategyError,
    machine_load,
    prefix_load,
    strategy_set,
)
from policies import (
    ALL_MECHANISMS,
    Mechanism,
    PolicyConfig,
    PolicyError,
    auto_p,
    check_feasibility,
    completion_power,
    completion_time,
    cost_key,
    evaluate_state,
    hypothetical_completion,
)
from psi import psi


class TestPolicyConfig:
    """Mechanism names and the parameter p"""

    def test_parse_names(self):
        """Names parse case-insensitively with or without dashes"""
        assert Mechanism.parse('LongestFirst') is Mechanism.LONGEST_FIRST
        assert Mechanism.parse('ccoord') is Mechanism.CCOORD
        assert Mechanism.parse('shortest-first') is Mechanism.SHORTEST_FIRST

    def test_unknown_name(self):
        """Unknown policy names are rejected"""
        with pytest.raises(PolicyError, match="Unknown policy"):
            Mechanism.parse('fifo')

    def test_p_must_be_positive(self):
        """p must be at least 1"""
        with pytest.raises(PolicyError):
            PolicyConfig(Mechanism.ACOORD, 0)

    def test_auto_p(self):
        """max(1, ceil(log2 m))"""
        assert [auto_p(m) for m in (1, 2, 3, 4, 5, 8, 9)] == [1, 1, 2, 2, 3, 3, 4]

    def test_for_instance_uses_auto(self):
        """m = 4 gives p = 2 by default"""
        assert PolicyConfig.for_instance('bcoord', 4).p == 2

    def test_for_instance_explicit_p(self):
        """An explicit p wins over the automatic choice"""
        assert PolicyConfig.for_instance('bcoord', 4, 3).p == 3

    def test_for_instance_config_default(self, tmp_path):
        """[engine] default_p replaces the automatic choice"""
        from config_loader import reload_config
        path = tmp_path / 'cfg.txt'
        path.write_text("[engine]\ndefault_p = 5\n")
        reload_config(str(path))
        assert PolicyConfig.for_instance('ccoord', 4).p == 5

    def test_from_epsilon(self):
        """p = 1/epsilon - 1 for epsilon = 1/(p+1)"""
        assert PolicyConfig.from_epsilon('ccoord', '1/2').p == 1
        assert PolicyConfig.from_epsilon('ccoord', Fraction(1, 4)).p == 3

    def test_from_epsilon_rejects(self):
        """epsilon must be 1/(p+1) for a whole p >= 1"""
        with pytest.raises(PolicyError):
            PolicyConfig.from_epsilon('ccoord', '0.3')
        with pytest.raises(PolicyError):
            PolicyConfig.from_epsilon('ccoord', '0.75')


class TestCompletionTimes:
    """Completion-time examples from the embedded cycle scenarios"""

    def test_longestfirst_b_alone(self, longestfirst_scenario):
        """(C,B,A,): job B alone on machine 2 finishes at 10"""
        s = longestfirst_scenario
        assert completion_time(s.policy, s.instance, s.states[0], 1) == pytest.approx(10)

    def test_longestfirst_a_after_b(self, longestfirst_scenario):
        """(C,,AB,): A runs after the longer B on machine 3, finishing at 12"""
        s = longestfirst_scenario
        assert completion_power(s.policy, s.instance, s.states[1], 0) == 12

    def test_randomized_expectation(self, randomized_scenario):
        """1/2 (171 + 171 + 2) = 172, then 1/2 (154 + 2 + 154 + 32) = 171"""
        s = randomized_scenario
        assert completion_power(s.policy, s.instance, s.states[0], 1) == 172
        assert completion_power(s.policy, s.instance, s.states[1], 1) == 171

    def test_makespan_single_job(self):
        """A lone job finishes at its own load"""
        inst = Instance.from_rows([[7, 9]])
        cfg = PolicyConfig(Mechanism.MAKESPAN)
        assert completion_time(cfg, inst, Assignment((0,)), 0) == 7

    def test_tie_break_ascending_id(self):
        """Equal loads run in ID order under both ShortestFirst and LongestFirst"""
        inst = Instance.from_rows([[2], [2], [1]])
        a = Assignment((0, 0, 0))
        sf = PolicyConfig(Mechanism.SHORTEST_FIRST)
        lf = PolicyConfig(Mechanism.LONGEST_FIRST)
        assert [completion_power(sf, inst, a, i) for i in range(3)] == [3, 5, 1]
        assert [completion_power(lf, inst, a, i) for i in range(3)] == [2, 4, 5]

    def test_bcoord_formula(self):
        """rho^(1/p) L(N_j)"""
        inst = Instance.from_rows([[8, 2], [3, 'inf']])
        cfg = PolicyConfig(Mechanism.BCOORD, 2)
        a = Assignment((0, 0))
        assert completion_time(cfg, inst, a, 0) == pytest.approx((8 / 2) ** 0.5 * 11)

    def test_acoord_formula(self):
        """rho^(1/p) L(N_j^i): only lower IDs delay a job"""
        inst = Instance.from_rows([[3, 1], [4, 4]])
        cfg = PolicyConfig(Mechanism.ACOORD, 2)
        a = Assignment((0, 0))
        assert completion_time(cfg, inst, a, 0) == pytest.approx(3 ** 0.5 * 3)
        assert completion_time(cfg, inst, a, 1) == pytest.approx(7)

    def test_ccoord_formula(self):
        """(rho Psi_p(N_j))^(1/p)"""
        inst = Instance.from_rows([[2, 1], [3, 'inf']])
        cfg = PolicyConfig(Mechanism.CCOORD, 2)
        a = Assignment((0, 0))
        expected = (2 * float(psi(2, [2, 3]))) ** 0.5
        assert completion_time(cfg, inst, a, 0) == pytest.approx(expected)

    def test_ccoord_completion_at_least_machine_load(self, random_instances):
        """CCOORD completion times never undercut the machine load"""
        rng = np.random.default_rng(3)
        for inst in random_instances(30, n_max=5, m_max=3, seed=8):
            a = random_assignment(inst, rng)
            cfg = PolicyConfig(Mechanism.CCOORD, 3)
            for i in range(inst.n):
                load = machine_load(inst, a, a.machine_of[i])
                assert completion_time(cfg, inst, a, i) >= float(load) * (1 - 1e-9)

    def test_infinite_machine_is_invariant_violation(self, small_instance):
        """A job on an infinite-load machine is an invalid state"""
        cfg = PolicyConfig(Mechanism.MAKESPAN)
        with pytest.raises(AssignmentError):
            completion_time(cfg, small_instance, Assignment((2, 0, 0)), 0)

    def test_acoord_ignores_higher_ids(self, random_instances):
        """Reassigning jobs with larger IDs never changes job i's completion time"""
        rng = np.random.default_rng(12)
        for inst in random_instances(30, n_max=5, m_max=3, seed=12):
            cfg = PolicyConfig(Mechanism.ACOORD, 2)
            a = random_assignment(inst, rng)
            b = random_assignment(inst, rng)
            for i in range(inst.n):
                mixed = Assignment(a.machine_of[:i + 1] + b.machine_of[i + 1:])
                assert completion_power(cfg, inst, a, i) == completion_power(cfg, inst, mixed, i)


class TestCostKeys:
    """Exact keys used for every decision"""

    def test_bcoord_scenario_costs(self, bcoord_scenario):
        """BCOORD p=2: job B's current and deviation keys in the first cycle state"""
        s = bcoord_scenario
        current = cost_key(s.policy, s.instance, s.states[0], 1, 1)
        deviated = cost_key(s.policy, s.instance, s.states[0], 1, 2)
        assert current == Fraction('8.2481') ** 3
        assert deviated == Fraction('0.6302') * (Fraction('0.0745') + Fraction('0.6302') + Fraction('29.1331')) ** 2
        assert float(current) == pytest.approx(561.127758090641, abs=1e-9)
        assert float(deviated) == pytest.approx(561.063473430968, abs=1e-9)
        assert deviated < current

    def test_infinite_target_raises(self, longestfirst_scenario):
        """Keys on machines outside the strategy set are refused"""
        s = longestfirst_scenario
        with pytest.raises(StrategyError):
            cost_key(s.policy, s.instance, s.states[0], 0, 1)

    def test_ccoord_p1_equals_bcoord_p1(self, random_instances):
        """At p=1, CCOORD and BCOORD keys coincide"""
        rng = np.random.default_rng(21)
        bcoord = PolicyConfig(Mechanism.BCOORD, 1)
        ccoord = PolicyConfig(Mechanism.CCOORD, 1)
        for inst in random_instances(30, n_max=5, m_max=3, seed=21):
            a = random_assignment(inst, rng)
            for i in range(inst.n):
                for j in range(inst.m):
                    if inst.loads[i][j] is None:
                        continue
                    assert cost_key(bcoord, inst, a, i, j) == cost_key(ccoord, inst, a, i, j)

    def test_key_matches_completion_power(self, random_instances):
        """Root mechanisms: key = w_i,min * completion^p"""
        rng = np.random.default_rng(4)
        for inst in random_instances(20, n_max=4, m_max=3, seed=4):
            a = random_assignment(inst, rng)
            for mechanism in (Mechanism.ACOORD, Mechanism.BCOORD, Mechanism.CCOORD):
                cfg = PolicyConfig(mechanism, 2)
                for i in range(inst.n):
                    key = cost_key(cfg, inst, a, i, a.machine_of[i])
                    w_min = min(w for w in inst.loads[i] if w is not None)
                    assert key == w_min * completion_power(cfg, inst, a, i)

    def test_hypothetical_completion_current_machine(self, small_instance):
        """Deviating to the current machine reproduces the completion time"""
        cfg = PolicyConfig(Mechanism.BCOORD, 2)
        a = Assignment((0, 2, 2))
        for i in range(3):
            assert hypothetical_completion(cfg, small_instance, a, i, a.machine_of[i]) == pytest.approx(
                completion_time(cfg, small_instance, a, i))


class TestFeasibility:
    """Completion times must be realisable by some schedule"""

    def test_makespan_always_feasible(self, small_instance):
        """Makespan completion times are always realisable"""
        report = check_feasibility(PolicyConfig(Mechanism.MAKESPAN), small_instance, Assignment((0, 0, 0)))
        assert report['passed']
        assert report['violation'] is None

    def test_randomized_equal_jobs(self):
        """Two unit jobs: the expectation 1.5 is not a schedule, a realized order is"""
        inst = Instance.from_rows([[1], [1]])
        report = check_feasibility(PolicyConfig(Mechanism.RANDOMIZED), inst, Assignment((0, 0)))
        assert report['passed']

    def test_all_policies_random_states(self, random_instances):
        """Every policy yields feasible completion times on random states"""
        rng = np.random.default_rng(99)
        for inst in random_instances(60, n_max=5, m_max=4, seed=99):
            a = random_assignment(inst, rng)
            for mechanism in ALL_MECHANISMS:
                for p in (1, 2, 3):
                    report = check_feasibility(PolicyConfig(mechanism, p), inst, a)
                    assert report['passed'], f"{mechanism.value} p={p}: {report['violation']}"
                    assert report['checked'] == inst.n


class TestEvaluateState:

    def test_report_shape(self, longestfirst_scenario):
        """The state report lists jobs by name with loads and feasibility"""
        s = longestfirst_scenario
        result = evaluate_state(s.policy, s.instance, s.states[0], s.job_names)
        assert [row['job'] for row in result['jobs']] == ['A', 'B', 'C']
        assert result['jobs'][1]['completion'] == '10'
        assert result['machine_loads'] == ['5', '10', '3', '0']
        assert result['feasibility']['passed']

    def test_report_inefficiency(self, small_instance):
        """rho = w_ij / w_i,min: job 0 on machine 0 is 4 / 2, job 1 on machine 2 is optimal"""
        result = evaluate_state(PolicyConfig(Mechanism.MAKESPAN), small_instance, Assignment((0, 2, 2)))
        assert [row['inefficiency'] for row in result['jobs']] == ['2', '1', '1']


class TestAnonymity:
    """Which policies ignore job IDs"""

    def test_anonymous_mechanisms(self):
        """Only ShortestFirst, LongestFirst and ACOORD look at job IDs"""
        anonymous = {mechanism for mechanism in ALL_MECHANISMS if mechanism.anonymous}
        assert anonymous == {Mechanism.MAKESPAN, Mechanism.RANDOMIZED, Mechanism.BCOORD, Mechanism.CCOORD}

    def test_acoord_key_uses_lower_prefix(self, random_instances):
        """ACOORD key = w_ij (L(N_j^(i-1)) + w_ij)^p, deviating or not"""
        rng = np.random.default_rng(44)
        for inst in random_instances(20, n_max=5, m_max=3, seed=44):
            cfg = PolicyConfig(Mechanism.ACOORD, 2)
            a = random_assignment(inst, rng)
            for i in range(inst.n):
                for j in strategy_set(inst, i):
                    w = inst.loads[i][j]
                    lower = prefix_load(inst, a, j, i - 1)
                    assert cost_key(cfg, inst, a, i, j) == w * (lower + w) ** 2, (i, j)
