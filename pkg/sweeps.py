"""
CoordMech - Property Sweeps
Randomized checks of the exact identities and invariants over many instances

Each sweep returns {'check', 'trials', 'failures', 'passed', 'examples'}
where examples holds up to MAX_EXAMPLES failing cases for debugging.

Checks:
- psi:          DP evaluator == brute-force oracle, all Psi properties
- potential:    CCOORD potential difference identity, acyclic Nash graphs
- convergence:  ACOORD round-robin converges within n rounds
- feasibility:  every policy produces schedulable completion times
- equivalence:  BCOORD(p=1) and CCOORD(p=1) induce the same game
- argmin:       cost keys and real completion times pick the same machine
- permutation:  anonymous policies ignore job IDs
"""

import logging
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np

from analysis import random_instance
from config_loader import get_config
from dynamics import (
    best_response,
    decode_state,
    enumerate_pne,
    is_pne,
    iterate_states,
    nash_dynamics_graph,
    potential_ccoord,
    random_assignment,
    run_rounds,
)
from instance_model import Instance, strategy_set
from policies import (
    ALL_MECHANISMS,
    Mechanism,
    PolicyConfig,
    check_feasibility,
    completion_power,
    cost_key,
    hypothetical_completion,
)
from psi import check_psi_properties, psi, psi_bruteforce

logger = logging.getLogger(__name__)

MAX_EXAMPLES = 5


class SweepResult:
    """Accumulates failures for one check"""

    def __init__(self, check: str):
        self.check = check
        self.trials = 0
        self.failures = 0
        self.examples: List[Dict] = []

    def record(self, ok: bool, example: Optional[Dict] = None):
        self.trials += 1
        if not ok:
            self.failures += 1
            if example is not None and len(self.examples) < MAX_EXAMPLES:
                self.examples.append(example)

    def to_dict(self, **extra) -> Dict:
        result = {
            'check': self.check,
            'trials': self.trials,
            'failures': self.failures,
            'passed': self.failures == 0,
            'examples': self.examples,
        }
        result.update(extra)
        if self.failures:
            logger.warning(f"⚠️  {self.check}: {self.failures}/{self.trials} cases failed")
        else:
            logger.info(f"✓ {self.check}: {self.trials} cases passed")
        return result


def _defaults(trials: Optional[int], seed: Optional[int]):
    config = get_config()
    if trials is None:
        trials = config.get_int('sweep', 'trials', 1000)
    if seed is None:
        seed = config.get_int('sweep', 'seed', 1)
    return trials, np.random.default_rng(seed)


def _draw_instance(rng: np.random.Generator, n_max: int, m_max: int) -> Instance:
    config = get_config()
    return random_instance(
        int(rng.integers(1, n_max + 1)),
        int(rng.integers(1, m_max + 1)),
        rng,
        load_min=config.get('sweep', 'load_min', '1'),
        load_max=config.get('sweep', 'load_max', '20'),
        max_denominator=config.get_int('sweep', 'max_denominator', 4),
        inf_probability=config.get_float('sweep', 'inf_probability', 0.2),
    )


def _draw_p(rng: np.random.Generator) -> int:
    return int(rng.choice(get_config().get_int_list('sweep', 'p_values', [1, 2, 3])))


def _rational(rng: np.random.Generator, hi: int = 100, max_denominator: int = 4) -> Fraction:
    d = int(rng.integers(1, max_denominator + 1))
    return Fraction(int(rng.integers(0, hi * d + 1)), d)


def _labels(inst: Instance) -> List[List[str]]:
    return [['inf' if w is None else str(w) for w in row] for row in inst.loads]


# ============================================================================
# PSI
# ============================================================================

def sweep_psi_oracle(trials: Optional[int] = None, seed: Optional[int] = None,
                     max_k: int = 6, max_elements: int = 6) -> Dict:
    """Random multisets in [0, 100]; DP == oracle for every order up to max_k, then every property"""
    trials, rng = _defaults(trials, seed)
    result = SweepResult('psi')

    for _ in range(trials):
        A = [_rational(rng) for _ in range(int(rng.integers(0, max_elements + 1)))]
        b = _rational(rng)
        k = int(rng.integers(1, max_k + 1))

        oracle_ok = all(psi(order, A) == psi_bruteforce(order, A) for order in range(max_k + 1))
        properties = check_psi_properties(k, A, b)
        failed = [name for name, ok in properties.items() if not ok]
        result.record(oracle_ok and not failed, {
            'k': k, 'A': [str(a) for a in A], 'b': str(b),
            'oracle': oracle_ok, 'failed_properties': failed,
        })

    return result.to_dict()


# ============================================================================
# CCOORD POTENTIAL
# ============================================================================

def sweep_ccoord_potential(trials: Optional[int] = None, seed: Optional[int] = None,
                           graph_trials: int = 200) -> Dict:
    """
    Potential identity on random deviations, then full Nash graphs

    Phi(N) - Phi(N') = (p+1) (key_i(N) - key_i(N')) for a deviation of job i,
    and on every enumerated graph: no cycle, at least one sink, and the
    minimum-potential state is a sink.
    """
    trials, rng = _defaults(trials, seed)
    identity = SweepResult('potential')

    while identity.trials < trials:
        inst = _draw_instance(rng, 5, 4)
        i = int(rng.integers(inst.n))
        options = strategy_set(inst, i)
        if len(options) < 2:
            continue
        cfg = PolicyConfig(Mechanism.CCOORD, _draw_p(rng))
        before = random_assignment(inst, rng)
        target = [j for j in options if j != before.machine_of[i]][int(rng.integers(len(options) - 1))]
        after = before.move(i, target)

        lhs = potential_ccoord(cfg, inst, before) - potential_ccoord(cfg, inst, after)
        rhs = (cfg.p + 1) * (
            cost_key(cfg, inst, before, i, before.machine_of[i]) - cost_key(cfg, inst, before, i, target)
        )
        identity.record(lhs == rhs, {'loads': _labels(inst), 'p': cfg.p, 'state': list(before.machine_of),
                                     'job': i, 'to': target})

    graphs = SweepResult('potential-graphs')
    for _ in range(graph_trials):
        inst = _draw_instance(rng, 4, 3)
        cfg = PolicyConfig(Mechanism.CCOORD, _draw_p(rng))
        ng = nash_dynamics_graph(cfg, inst)
        lowest = min(ng.graph.nodes, key=lambda code: (potential_ccoord(cfg, inst, decode_state(inst, code)), code))
        ok = ng.is_acyclic and bool(ng.sinks) and lowest in set(ng.sinks)
        graphs.record(ok, {'loads': _labels(inst), 'p': cfg.p, 'summary': ng.summary()})

    graph_result = graphs.to_dict()
    result = identity.to_dict(graph_trials=graph_result['trials'], graph_failures=graph_result['failures'])
    result['passed'] = result['passed'] and graph_result['passed']
    result['examples'] = result['examples'] + graph_result['examples']
    return result


# ============================================================================
# ACOORD CONVERGENCE
# ============================================================================

def sweep_acoord_convergence(trials: Optional[int] = None, seed: Optional[int] = None,
                             starts: int = 10, n_max: int = 6, m_max: int = 4) -> Dict:
    """Ascending-ID rounds from random starts reach a PNE within n moving rounds"""
    trials, rng = _defaults(trials, seed)
    result = SweepResult('convergence')

    for _ in range(trials):
        inst = _draw_instance(rng, n_max, m_max)
        cfg = PolicyConfig(Mechanism.ACOORD, _draw_p(rng))
        for _ in range(starts):
            start = random_assignment(inst, rng)
            trace = run_rounds(cfg, inst, start, order='round-robin', max_rounds=inst.n + 1)
            ok = trace.converged and trace.moving_rounds <= inst.n and is_pne(cfg, inst, trace.final)
            result.record(ok, {'loads': _labels(inst), 'p': cfg.p, 'start': list(start.machine_of),
                               'rounds': trace.rounds, 'moving_rounds': trace.moving_rounds})

    return result.to_dict()


# ============================================================================
# FEASIBILITY
# ============================================================================

def sweep_feasibility(trials: Optional[int] = None, seed: Optional[int] = None) -> Dict:
    """Random states; check_feasibility under all seven policies"""
    trials, rng = _defaults(trials, seed)
    result = SweepResult('feasibility')

    for _ in range(trials):
        inst = _draw_instance(rng, 6, 4)
        a = random_assignment(inst, rng)
        p = _draw_p(rng)
        for mechanism in ALL_MECHANISMS:
            report = check_feasibility(PolicyConfig(mechanism, p), inst, a)
            result.record(report['passed'], {'loads': _labels(inst), 'policy': mechanism.value, 'p': p,
                                             'state': list(a.machine_of), 'violation': report['violation']})

    return result.to_dict()


# ============================================================================
# BCOORD(p=1) == CCOORD(p=1)
# ============================================================================

def sweep_bcoord_ccoord_equivalence(trials: Optional[int] = None, seed: Optional[int] = None) -> Dict:
    """Same best response for every (state, job), same PNE set"""
    trials, rng = _defaults(trials, seed)
    result = SweepResult('equivalence')
    bcoord = PolicyConfig(Mechanism.BCOORD, 1)
    ccoord = PolicyConfig(Mechanism.CCOORD, 1)

    for _ in range(trials):
        inst = _draw_instance(rng, 4, 3)
        same_responses = all(
            best_response(bcoord, inst, a, i) == best_response(ccoord, inst, a, i)
            for _, a in iterate_states(inst) for i in range(inst.n)
        )
        same_pne = enumerate_pne(bcoord, inst) == enumerate_pne(ccoord, inst)
        result.record(same_responses and same_pne, {'loads': _labels(inst),
                                                     'responses': same_responses, 'pne': same_pne})

    return result.to_dict()


# ============================================================================
# KEY / COMPLETION AGREEMENT
# ============================================================================

def sweep_argmin_invariance(trials: Optional[int] = None, seed: Optional[int] = None) -> Dict:
    """
    The machine minimising the cost key minimises the real completion time

    Real argmins are only trusted when the gap to the runner-up exceeds the
    [engine] argmin_gap_guard; exact key ties must be real ties.
    """
    trials, rng = _defaults(trials, seed)
    config = get_config()
    guard = config.get_float('engine', 'argmin_gap_guard', 1e-6)
    rel_tol = config.get_float('engine', 'relative_tolerance', 1e-9)
    result = SweepResult('argmin')

    while result.trials < trials:
        inst = _draw_instance(rng, 5, 4)
        i = int(rng.integers(inst.n))
        options = strategy_set(inst, i)
        if len(options) < 2:
            continue
        cfg = PolicyConfig(ALL_MECHANISMS[int(rng.integers(len(ALL_MECHANISMS)))], _draw_p(rng))
        a = random_assignment(inst, rng)

        keys = {j: cost_key(cfg, inst, a, i, j) for j in options}
        times = {j: hypothetical_completion(cfg, inst, a, i, j) for j in options}

        best_key = min(keys.values())
        key_argmin = {j for j in options if keys[j] == best_key}
        ranked = sorted(options, key=lambda j: times[j])
        first, second = times[ranked[0]], times[ranked[1]]

        ok = True
        if second - first > guard * max(1.0, abs(first)):
            ok = key_argmin == {ranked[0]}
        for j in key_argmin:
            ok = ok and abs(times[j] - first) <= rel_tol * max(1.0, abs(first))

        result.record(ok, {'loads': _labels(inst), 'policy': cfg.label(), 'state': list(a.machine_of), 'job': i})

    return result.to_dict()


def sweep_id_permutation(trials: Optional[int] = None, seed: Optional[int] = None) -> Dict:
    """Relabelling jobs leaves the multiset of completion times unchanged for anonymous policies"""
    trials, rng = _defaults(trials, seed)
    anonymous = [mechanism for mechanism in ALL_MECHANISMS if mechanism.anonymous]
    result = SweepResult('permutation')

    for _ in range(trials):
        inst = _draw_instance(rng, 5, 4)
        a = random_assignment(inst, rng)
        cfg = PolicyConfig(anonymous[int(rng.integers(len(anonymous)))], _draw_p(rng))
        perm = [int(k) for k in rng.permutation(inst.n)]
        inst_p, a_p = inst.permute_jobs(perm), a.permute_jobs(perm)

        original = sorted(completion_power(cfg, inst, a, i) for i in range(inst.n))
        permuted = sorted(completion_power(cfg, inst_p, a_p, i) for i in range(inst.n))
        result.record(original == permuted, {'loads': _labels(inst), 'policy': cfg.label(),
                                             'state': list(a.machine_of), 'perm': perm})

    return result.to_dict()


SWEEPS: Dict[str, Callable[..., Dict]] = {
    'psi': sweep_psi_oracle,
    'potential': sweep_ccoord_potential,
    'convergence': sweep_acoord_convergence,
    'feasibility': sweep_feasibility,
    'equivalence': sweep_bcoord_ccoord_equivalence,
    'argmin': sweep_argmin_invariance,
    'permutation': sweep_id_permutation,
}


def run_sweeps(names: List[str], trials: Optional[int] = None, seed: Optional[int] = None) -> List[Dict]:
    """Run the named property sweeps in order"""
    unknown = [name for name in names if name not in SWEEPS]
    if unknown:
        raise ValueError(f"Unknown checks {unknown} (expected {', '.join(SWEEPS)})")

    logger.info("=" * 60)
    logger.info(f"PROPERTY SWEEPS: {', '.join(names)}")
    logger.info("=" * 60)
    return [SWEEPS[name](trials=trials, seed=seed) for name in names]
