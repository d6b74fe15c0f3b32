"""
Tests for the instance model: loads, inefficiencies, norms and file formats
"""

import json
from fractions import Fraction

import numpy as np
import pytest

from instance_model import (
    Assignment,
    AssignmentError,
    Instance,
    InfeasibleRowError,
    InstanceError,
    MalformedInstanceError,
    NonPositiveLoadError,
    StrategyError,
    format_rational,
    format_state,
    inefficiency,
    load_instance,
    lp_norm,
    machine_load,
    machine_loads,
    min_load,
    parse_assignment,
    parse_instance,
    parse_state,
    prefix_load,
    serialize_assignment,
    serialize_instance,
    strategy_set,
    validate_assignment,
)


class TestInstanceInvariants:
    """Construction rejects instances that break the model"""

    def test_from_rows_parses_mixed_entries(self, small_instance):
        """Integers, fractions, decimals and 'inf' all become exact loads"""
        assert small_instance.loads[1][0] == Fraction(3, 2)
        assert small_instance.loads[2][2] == Fraction(5, 2)
        assert small_instance.loads[0][2] is None
        assert (small_instance.n, small_instance.m) == (3, 3)

    def test_non_positive_load_rejected(self):
        """Zero loads are not allowed"""
        with pytest.raises(NonPositiveLoadError):
            Instance.from_rows([[0, 1]])
        with pytest.raises(NonPositiveLoadError):
            Instance.from_rows([['-2', 1]])

    def test_all_infinite_row_rejected(self):
        """Every job needs a finite machine"""
        with pytest.raises(InfeasibleRowError):
            Instance.from_rows([[1, 2], ['inf', 'inf']])

    def test_ragged_rows_rejected(self):
        """All rows must have m entries"""
        with pytest.raises(InstanceError):
            Instance.from_rows([[1, 2], [3]])

    def test_state_count_is_product_of_strategy_sets(self, small_instance):
        """18 states: 2 x 3 x 3 finite strategies"""
        assert small_instance.state_count() == 2 * 3 * 3


class TestLoadsAndInefficiency:
    """min_load, inefficiency, machine_load and prefix_load"""

    def test_min_load_single_machine(self):
        """One machine: the minimum is its load"""
        inst = Instance.from_rows([[5]])
        assert min_load(inst, 0) == 5

    def test_min_load_longestfirst_job_a(self, longestfirst_scenario):
        """Job A has loads (14, inf, 3, 7)"""
        assert min_load(longestfirst_scenario.instance, 0) == 3

    def test_min_load_matches_linear_scan(self, random_instances):
        """The cached minimum equals a scan over finite entries"""
        for inst in random_instances(20, n_max=3, m_max=3, seed=3):
            for i in range(inst.n):
                expected = min(w for w in inst.loads[i] if w is not None)
                assert min_load(inst, i) == expected

    def test_inefficiency_values(self, longestfirst_scenario):
        """rho = 14/3 for job A on machine 0, 1 on its fastest machine 2"""
        inst = longestfirst_scenario.instance
        assert inefficiency(inst, 0, 0) == Fraction(14, 3)
        assert inefficiency(inst, 0, 2) == 1

    def test_inefficiency_equal_loads_is_one(self):
        """Identical loads give inefficiency 1 everywhere"""
        inst = Instance.from_rows([[4, 4, 4]])
        assert all(inefficiency(inst, 0, j) == 1 for j in range(3))

    def test_inefficiency_infinite_machine_raises(self, longestfirst_scenario):
        """Inefficiency is undefined outside the strategy set"""
        with pytest.raises(StrategyError, match="not in strategy set"):
            inefficiency(longestfirst_scenario.instance, 0, 1)

    def test_inefficiency_at_least_one(self, random_instances):
        """No machine beats the job's fastest one"""
        for inst in random_instances(20, seed=4):
            for i in range(inst.n):
                for j in strategy_set(inst, i):
                    assert inefficiency(inst, i, j) >= 1

    def test_machine_load_randomized_state(self, randomized_scenario):
        """State (CD,BE,AF,G): machine 2 carries B and E, 171 + 2"""
        inst, first = randomized_scenario.instance, randomized_scenario.states[0]
        assert machine_load(inst, first, 1) == 173

    def test_machine_load_bcoord_state(self, bcoord_scenario):
        """State (C,B,AD,E): machine 3 carries A and D, 0.0745 + 29.1331"""
        inst, first = bcoord_scenario.instance, bcoord_scenario.states[0]
        assert machine_load(inst, first, 2) == Fraction('29.2076')

    def test_machine_load_empty_machine(self, longestfirst_scenario):
        """(C,B,A,) leaves machine 4 empty"""
        inst, first = longestfirst_scenario.instance, longestfirst_scenario.states[0]
        assert machine_load(inst, first, 3) == 0

    def test_move_is_additive(self, small_instance):
        """Moving a job shifts exactly its load between two machines"""
        a = Assignment((0, 2, 2))
        b = a.move(1, 0)
        assert machine_load(small_instance, b, 2) == machine_load(small_instance, a, 2) - 1
        assert machine_load(small_instance, b, 0) == machine_load(small_instance, a, 0) + Fraction(3, 2)
        assert a.machine_of == (0, 2, 2), "move must not mutate the original"

    def test_machine_loads_vector(self, small_instance):
        """Empty machines report zero load"""
        a = Assignment((1, 2, 2))
        assert machine_loads(small_instance, a) == [0, 2, Fraction(7, 2)]

    def test_prefix_load_full_prefix(self, small_instance):
        """With i = n-1 the prefix load is the full machine load"""
        a = Assignment((0, 0, 0))
        for j in range(3):
            assert prefix_load(small_instance, a, j, small_instance.n - 1) == machine_load(small_instance, a, j)

    def test_prefix_load_first_job_elsewhere(self, small_instance):
        """Job 0 not on the machine leaves its prefix empty"""
        a = Assignment((1, 0, 0))
        assert prefix_load(small_instance, a, 0, 0) == 0

    def test_prefix_load_matches_filter(self, random_instances):
        """Prefix loads equal an explicit filter over lower IDs"""
        rng = np.random.default_rng(5)
        for inst in random_instances(20, n_max=5, m_max=3, seed=5):
            a = Assignment(tuple(strategy_set(inst, i)[0] for i in range(inst.n)))
            i = int(rng.integers(inst.n))
            j = a.machine_of[0]
            expected = sum((inst.loads[k][j] for k in range(i + 1) if a.machine_of[k] == j), Fraction(0))
            assert prefix_load(inst, a, j, i) == expected


class TestNorms:
    """lp_norm and the max <= l_k <= m^(1/k) max sandwich"""

    def test_single_element(self):
        """The norm of one entry is that entry"""
        for k in range(1, 5):
            assert lp_norm([Fraction(3)], k) == pytest.approx(3)

    def test_pythagorean_triple(self):
        """l2 of (3, 4) is 5"""
        assert lp_norm([Fraction(3), Fraction(4)], 2) == pytest.approx(5)

    def test_four_ones(self):
        """l2 of four ones is 2"""
        assert lp_norm([Fraction(1)] * 4, 2) == pytest.approx(2)

    def test_sandwich_on_random_vectors(self):
        """max(x) <= l_k(x) <= m^(1/k) max(x)"""
        rng = np.random.default_rng(11)
        for _ in range(200):
            values = [Fraction(int(x), 4) for x in rng.integers(0, 80, size=int(rng.integers(1, 6)))]
            k = int(rng.integers(1, 7))
            norm = lp_norm(values, k)
            top = float(max(values))
            assert top <= norm * (1 + 1e-9) + 1e-12
            assert norm <= len(values) ** (1 / k) * top * (1 + 1e-9) + 1e-12

    def test_order_must_be_positive(self):
        """Norm order 0 is rejected"""
        with pytest.raises(ValueError):
            lp_norm([Fraction(1)], 0)


class TestInstanceFormat:
    """Instance and assignment JSON documents"""

    def test_decimal_literal_is_exact(self):
        """Decimal strings parse without float rounding"""
        inst = parse_instance('{"jobs": 1, "machines": 2, "loads": [["8.2481", "inf"]]}')
        assert inst.loads[0][0] == Fraction(82481, 10000)
        assert inst.loads[0][1] is None

    def test_json_number_literal_is_exact(self):
        """Bare JSON numbers are parsed from their text, not through float"""
        inst = parse_instance('{"jobs": 1, "machines": 1, "loads": [[4.0202]]}')
        assert inst.loads[0][0] == Fraction(20101, 5000)

    def test_round_trip_longestfirst(self, longestfirst_scenario):
        """Serialised instances parse back unchanged"""
        text = serialize_instance(longestfirst_scenario.instance)
        again = parse_instance(text)
        assert again == longestfirst_scenario.instance
        assert json.loads(serialize_instance(again)) == json.loads(text)

    def test_round_trip_bcoord_decimals(self, bcoord_scenario):
        """Terminating decimals are written as decimals"""
        text = serialize_instance(bcoord_scenario.instance)
        assert '"29.1331"' in text
        assert parse_instance(text) == bcoord_scenario.instance

    def test_round_trip_file(self, instance_file, small_instance):
        """Saved instance files load back unchanged"""
        assert load_instance(str(instance_file)) == small_instance

    def test_format_rational(self):
        """Integers, terminating decimals and a/b fractions"""
        assert format_rational(Fraction(5)) == 5
        assert format_rational(Fraction(3, 2)) == '1.5'
        assert format_rational(Fraction(1, 40)) == '0.025'
        assert format_rational(Fraction(1, 3)) == '1/3'

    def test_malformed_json(self):
        """Truncated JSON is a malformed instance"""
        with pytest.raises(MalformedInstanceError):
            parse_instance('{"jobs": 1, ')

    def test_missing_field(self):
        """The loads field is required"""
        with pytest.raises(MalformedInstanceError):
            parse_instance('{"jobs": 1, "machines": 1}')

    def test_row_count_mismatch(self):
        """The jobs field must match the number of rows"""
        with pytest.raises(MalformedInstanceError):
            parse_instance('{"jobs": 2, "machines": 1, "loads": [[1]]}')

    def test_bad_literal(self):
        """Non-numeric entries are rejected"""
        with pytest.raises(MalformedInstanceError):
            parse_instance('{"jobs": 1, "machines": 1, "loads": [["abc"]]}')

    def test_non_positive_load_error(self):
        """Zero loads raise their own error"""
        with pytest.raises(NonPositiveLoadError):
            parse_instance('{"jobs": 1, "machines": 2, "loads": [["0", 1]]}')

    def test_infeasible_row_error(self):
        """All-infinite rows raise their own error"""
        with pytest.raises(InfeasibleRowError):
            parse_instance('{"jobs": 1, "machines": 2, "loads": [["inf", "inf"]]}')

    def test_parse_errors_are_distinct(self):
        """Value errors are not reported as malformed JSON"""
        assert not issubclass(NonPositiveLoadError, MalformedInstanceError)
        assert not issubclass(InfeasibleRowError, MalformedInstanceError)

    def test_assignment_round_trip(self, small_instance):
        """Assignments survive serialisation"""
        a = Assignment((1, 2, 0))
        assert parse_assignment(serialize_assignment(a), small_instance) == a

    def test_assignment_on_infinite_machine(self, small_instance):
        """Assignments onto infinite machines are rejected"""
        with pytest.raises(AssignmentError):
            parse_assignment('{"machine_of": [2, 0, 0]}', small_instance)

    def test_assignment_wrong_length(self, small_instance):
        """Assignments must cover every job"""
        with pytest.raises(AssignmentError):
            validate_assignment(small_instance, Assignment((0, 0)))


class TestStateNotation:
    """Per-machine group labels such as (C,B,AD,E)"""

    def test_parse_state(self):
        """Labels list each machine's jobs by name"""
        a = parse_state('(C,B,AD,E)', 'ABCDE', 4)
        assert a.machine_of == (2, 1, 0, 2, 3)

    def test_parse_state_empty_groups(self):
        """Empty machines are empty groups"""
        a = parse_state('(C,,AB,)', 'ABC', 4)
        assert a.machine_of == (2, 2, 0)

    def test_format_state_inverts_parse(self):
        """Formatting a parsed label gives the label back"""
        label = '(,,AD,BCE)'
        assert format_state(parse_state(label, 'ABCDE', 4), 'ABCDE', 4) == label

    def test_parse_state_rejects_bad_labels(self):
        """The group count must equal m"""
        with pytest.raises(MalformedInstanceError):
            parse_state('(C,B,A)', 'ABC', 4)
        with pytest.raises(MalformedInstanceError):
            parse_state('(C,B,AA,)', 'ABC', 4)
        with pytest.raises(MalformedInstanceError):
            parse_state('(C,B,,)', 'ABC', 4)
        with pytest.raises(MalformedInstanceError):
            parse_state('(C,B,X,)', 'ABC', 4)


class TestPermutation:
    """Consistent relabelling of job IDs"""

    def test_permute_jobs_consistent(self, small_instance):
        """Relabelling instance and assignment together keeps loads per machine"""
        a = Assignment((1, 2, 0))
        perm = [2, 0, 1]
        inst_p, a_p = small_instance.permute_jobs(perm), a.permute_jobs(perm)
        for k in range(3):
            assert inst_p.loads[k] == small_instance.loads[perm[k]]
            assert a_p.machine_of[k] == a.machine_of[perm[k]]
        validate_assignment(inst_p, a_p)

    def test_permute_rejects_non_permutation(self, small_instance):
        """Duplicated job indices are rejected"""
        with pytest.raises(InstanceError):
            small_instance.permute_jobs([0, 0, 1])
