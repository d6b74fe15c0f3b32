"""
CoordMech - Dynamics Engine
Best-response dynamics, PNE enumeration and the Nash dynamics graph

- best response: the strictly improving machine with the smallest cost key,
  lowest machine index on ties
- rounds: every job plays its best response once per round; stop at the
  first silent round (PNE) or at max_rounds
- Nash graph: one node per feasible state, one edge per strictly improving
  single-job deviation; sinks are exactly the PNE
- potentials: CCOORD  Phi(N) = sum_j Psi_(p+1)(N_j)
              ACOORD  per-job key vector in ID order, decreasing lexicographically

State codes are mixed-radix integers over the per-job strategy sets,
job 0 least significant: code = sum_i pos_i * prod_(k<i) |S_k| where pos_i
is the index of job i's machine in its ascending strategy set.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from multiprocessing import Pool
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from config_loader import get_config
from instance_model import Assignment, AssignmentError, Instance, strategy_set, validate_assignment
from policies import Mechanism, PolicyConfig, PolicyError, cost_key
from psi import psi

logger = logging.getLogger(__name__)

ORDERS = ('round-robin', 'reverse', 'random')


class StateSpaceTooLarge(ValueError):
    """Exhaustive scan refused: too many states"""


# ============================================================================
# TRACES
# ============================================================================

@dataclass
class MoveRecord:
    job: int
    from_machine: int
    to_machine: int
    old_key: Fraction
    new_key: Fraction
    round: int

    def to_dict(self) -> Dict:
        return {
            'job': self.job,
            'from': self.from_machine,
            'to': self.to_machine,
            'old_key': str(self.old_key),
            'new_key': str(self.new_key),
            'round': self.round,
        }


@dataclass
class DynamicsTrace:
    initial: Assignment
    final: Assignment
    moves: List[MoveRecord] = field(default_factory=list)
    status: str = 'round-limit'
    rounds: int = 0

    @property
    def converged(self) -> bool:
        return self.status == 'converged'

    @property
    def moving_rounds(self) -> int:
        """Rounds in which at least one job moved"""
        return len({move.round for move in self.moves})

    def visited_states(self) -> List[Assignment]:
        states = [self.initial]
        for move in self.moves:
            states.append(states[-1].move(move.job, move.to_machine))
        return states

    def revisits_state(self) -> bool:
        states = self.visited_states()
        return len(set(states)) < len(states)

    def to_dict(self) -> Dict:
        return {
            'status': self.status,
            'rounds': self.rounds,
            'moving_rounds': self.moving_rounds,
            'initial': list(self.initial.machine_of),
            'final': list(self.final.machine_of),
            'moves': [move.to_dict() for move in self.moves],
        }


# ============================================================================
# BEST RESPONSE AND ROUNDS
# ============================================================================

def best_response(cfg: PolicyConfig, inst: Instance, a: Assignment, i: int) -> Optional[Tuple[int, Fraction]]:
    """(machine, key) of job i's best response, or None when no strict improvement exists"""
    current = a.machine_of[i]
    current_key = cost_key(cfg, inst, a, i, current)

    best_machine, best_key = None, current_key
    for j in strategy_set(inst, i):
        if j == current:
            continue
        key = cost_key(cfg, inst, a, i, j)
        if key < best_key:
            best_machine, best_key = j, key

    if best_machine is None:
        return None
    return best_machine, best_key


def improving_moves(cfg: PolicyConfig, inst: Instance, a: Assignment, i: int) -> List[Tuple[int, Fraction, Fraction]]:
    """Every (machine, old_key, new_key) strictly improving for job i"""
    current = a.machine_of[i]
    current_key = cost_key(cfg, inst, a, i, current)
    moves = []
    for j in strategy_set(inst, i):
        if j == current:
            continue
        key = cost_key(cfg, inst, a, i, j)
        if key < current_key:
            moves.append((j, current_key, key))
    return moves


def is_pne(cfg: PolicyConfig, inst: Instance, a: Assignment) -> bool:
    return all(best_response(cfg, inst, a, i) is None for i in range(inst.n))


def resolve_order(order: Union[str, Sequence[int]], n: int) -> Union[str, List[int]]:
    """Validate a named order or an explicit job permutation"""
    if isinstance(order, str):
        if order not in ORDERS:
            raise ValueError(f"Unknown order '{order}' (expected {', '.join(ORDERS)} or a permutation)")
        return order
    jobs = [int(i) for i in order]
    if sorted(jobs) != list(range(n)):
        raise ValueError(f"Order must be a permutation of 0..{n - 1}, got {jobs}")
    return jobs


def _round_jobs(order: Union[str, List[int]], n: int, rng: np.random.Generator) -> List[int]:
    if order == 'round-robin':
        return list(range(n))
    if order == 'reverse':
        return list(range(n - 1, -1, -1))
    if order == 'random':
        return [int(i) for i in rng.permutation(n)]
    return list(order)


def run_rounds(cfg: PolicyConfig, inst: Instance, initial: Assignment,
               order: Union[str, Sequence[int], None] = None,
               max_rounds: Optional[int] = None, seed: Optional[int] = None) -> DynamicsTrace:
    """
    Best-response dynamics in rounds

    Each round lets every job in `order` play its best response once.
    The 'random' order draws a fresh permutation each round from `seed`.
    """
    config = get_config()
    if order is None:
        order = config.get('dynamics', 'order', 'round-robin')
    if max_rounds is None:
        max_rounds = config.get_int('dynamics', 'max_rounds', 100)
    if max_rounds < 1:
        raise ValueError(f"max_rounds must be >= 1, got {max_rounds}")

    validate_assignment(inst, initial)
    order = resolve_order(order, inst.n)
    rng = np.random.default_rng(seed)

    trace = DynamicsTrace(initial=initial, final=initial)
    state = initial

    for round_index in range(1, max_rounds + 1):
        moved = False
        for i in _round_jobs(order, inst.n, rng):
            response = best_response(cfg, inst, state, i)
            if response is None:
                continue
            j, new_key = response
            old_key = cost_key(cfg, inst, state, i, state.machine_of[i])
            trace.moves.append(MoveRecord(i, state.machine_of[i], j, old_key, new_key, round_index))
            state = state.move(i, j)
            moved = True

        trace.rounds = round_index
        if not moved:
            trace.status = 'converged'
            break

    trace.final = state
    if trace.status != 'converged' and is_pne(cfg, inst, state):
        trace.status = 'converged'

    logger.debug(f"Dynamics {cfg.label()}: {trace.status} after {trace.rounds} rounds, {len(trace.moves)} moves")
    return trace


def random_assignment(inst: Instance, rng: np.random.Generator) -> Assignment:
    """Uniform machine from each job's strategy set"""
    machines = []
    for i in range(inst.n):
        strategies = strategy_set(inst, i)
        machines.append(strategies[int(rng.integers(len(strategies)))])
    return Assignment(tuple(machines))


def best_response_probe(cfg: PolicyConfig, inst: Instance, trials: int = 100, seed: int = 1,
                        max_rounds: Optional[int] = None) -> Dict:
    """
    Run best-response dynamics from random starts under random round orders

    Reports how many runs hit the round limit or revisited a state. A
    non-converging run is evidence of a best-response cycle, never proof
    that none exists.
    """
    rng = np.random.default_rng(seed)
    stuck, revisits, total_rounds = 0, 0, []

    for _ in range(trials):
        start = random_assignment(inst, rng)
        trace = run_rounds(cfg, inst, start, order='random', max_rounds=max_rounds,
                           seed=int(rng.integers(2 ** 31)))
        total_rounds.append(trace.rounds)
        if not trace.converged:
            stuck += 1
        if trace.revisits_state():
            revisits += 1

    if stuck:
        logger.info(f"⚠️  {stuck}/{trials} best-response runs did not converge under {cfg.label()}")

    return {
        'policy': cfg.to_dict(),
        'trials': trials,
        'non_converged': stuck,
        'revisiting_runs': revisits,
        'mean_rounds': float(np.mean(total_rounds)) if total_rounds else 0.0,
        'max_rounds_seen': int(max(total_rounds)) if total_rounds else 0,
    }


# ============================================================================
# STATE SPACE
# ============================================================================

def encode_state(inst: Instance, a: Assignment) -> int:
    code, scale = 0, 1
    for i in range(inst.n):
        strategies = strategy_set(inst, i)
        code += strategies.index(a.machine_of[i]) * scale
        scale *= len(strategies)
    return code


def decode_state(inst: Instance, code: int) -> Assignment:
    if not 0 <= code < inst.state_count():
        raise ValueError(f"State code {code} out of range for {inst.state_count()} states")
    machines = []
    for i in range(inst.n):
        strategies = strategy_set(inst, i)
        code, pos = divmod(code, len(strategies))
        machines.append(strategies[pos])
    return Assignment(tuple(machines))


def check_state_cap(inst: Instance, cap: Optional[int] = None) -> int:
    """State count, or StateSpaceTooLarge above the [limits] state_cap"""
    if cap is None:
        cap = get_config().get_int('limits', 'state_cap', 2_000_000)
    count = inst.state_count()
    if count > cap:
        raise StateSpaceTooLarge(f"{count} states exceed state_cap={cap}")
    return count


def iterate_states(inst: Instance, start: int = 0, stop: Optional[int] = None) -> Iterator[Tuple[int, Assignment]]:
    """(code, assignment) for codes in [start, stop), in code order"""
    if stop is None:
        stop = inst.state_count()
    if start == 0 and stop == inst.state_count():
        # job 0 varies fastest
        sets = [strategy_set(inst, i) for i in reversed(range(inst.n))]
        for code, combo in enumerate(product(*sets)):
            yield code, Assignment(tuple(reversed(combo)))
        return
    for code in range(start, stop):
        yield code, decode_state(inst, code)


def _shards(count: int, workers: int) -> List[Tuple[int, int]]:
    size = -(-count // workers)
    return [(lo, min(lo + size, count)) for lo in range(0, count, size)]


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = get_config().get_int('workers', 'threads', 1)
    return max(1, int(threads))


def _pne_shard(args) -> List[int]:
    cfg, inst, lo, hi = args
    return [code for code, a in iterate_states(inst, lo, hi) if is_pne(cfg, inst, a)]


def _edge_shard(args) -> List[Tuple[int, int, int]]:
    cfg, inst, lo, hi = args
    edges = []
    for code, a in iterate_states(inst, lo, hi):
        for i in range(inst.n):
            for j, _, _ in improving_moves(cfg, inst, a, i):
                edges.append((code, encode_state(inst, a.move(i, j)), i))
    return edges


def _scan(worker, cfg: PolicyConfig, inst: Instance, count: int, threads: int) -> List:
    if threads <= 1 or count < 2:
        return worker((cfg, inst, 0, count))
    shards = [(cfg, inst, lo, hi) for lo, hi in _shards(count, threads)]
    with Pool(processes=threads) as pool:
        parts = pool.map(worker, shards)
    return [item for part in parts for item in part]


def enumerate_pne(cfg: PolicyConfig, inst: Instance, cap: Optional[int] = None,
                  threads: Optional[int] = None) -> List[Assignment]:
    """All pure Nash equilibria, in state-code order"""
    count = check_state_cap(inst, cap)
    threads = _resolve_threads(threads)
    codes = sorted(_scan(_pne_shard, cfg, inst, count, threads))
    logger.debug(f"{len(codes)} PNE among {count} states under {cfg.label()}")
    return [decode_state(inst, code) for code in codes]


# ============================================================================
# NASH DYNAMICS GRAPH
# ============================================================================

@dataclass
class NashGraph:
    graph: nx.DiGraph
    sinks: List[int]
    components: List[List[int]]
    cycle: Optional[List[int]] = None

    @property
    def has_cycle(self) -> bool:
        return self.cycle is not None

    @property
    def is_acyclic(self) -> bool:
        return self.cycle is None

    def cycle_certificate(self, inst: Instance) -> Optional[Dict]:
        """Closed state sequence (first == last) as machine_of lists"""
        if self.cycle is None:
            return None
        return {
            'encoding': 'mixed-radix over ascending strategy sets, job 0 least significant',
            'codes': list(self.cycle),
            'states': [list(decode_state(inst, code).machine_of) for code in self.cycle],
        }

    def summary(self) -> Dict:
        return {
            'states': self.graph.number_of_nodes(),
            'edges': self.graph.number_of_edges(),
            'sinks': len(self.sinks),
            'nontrivial_components': len(self.components),
            'has_cycle': self.has_cycle,
        }


def nash_dynamics_graph(cfg: PolicyConfig, inst: Instance, cap: Optional[int] = None,
                        threads: Optional[int] = None) -> NashGraph:
    """Full improving-move digraph with sinks, nontrivial SCCs and one cycle certificate"""
    count = check_state_cap(inst, cap)
    threads = _resolve_threads(threads)

    graph = nx.DiGraph()
    graph.add_nodes_from(range(count))
    for u, v, job in _scan(_edge_shard, cfg, inst, count, threads):
        graph.add_edge(u, v, job=job)

    sinks = sorted(node for node in graph.nodes if graph.out_degree(node) == 0)
    components = [sorted(scc) for scc in nx.strongly_connected_components(graph) if len(scc) > 1]
    components.sort()

    cycle = None
    if components:
        edges = nx.find_cycle(graph.subgraph(components[0]))
        cycle = [u for u, _ in edges] + [edges[0][0]]

    logger.info(
        f"Nash graph {cfg.label()}: {count} states, {graph.number_of_edges()} edges, "
        f"{len(sinks)} sinks, {len(components)} nontrivial SCCs"
    )
    return NashGraph(graph=graph, sinks=sinks, components=components, cycle=cycle)


def to_dot(ng: NashGraph, inst: Instance, job_names: Optional[Sequence[str]] = None) -> str:
    """DOT text; sinks (PNE) drawn as filled double circles, cycle edges in red"""
    names = list(job_names) if job_names else [str(i) for i in range(inst.n)]

    def label(code: int) -> str:
        a = decode_state(inst, code)
        groups = [''.join(names[i] for i in a.jobs_on(j)) for j in range(inst.m)]
        return '(' + ','.join(groups) + ')'

    cycle_edges = set()
    if ng.cycle:
        cycle_edges = set(zip(ng.cycle, ng.cycle[1:]))

    sinks = set(ng.sinks)
    lines = ['digraph nash_dynamics {', '  rankdir=LR;', '  node [shape=circle, fontsize=10];']
    for node in sorted(ng.graph.nodes):
        if node in sinks:
            lines.append(f'  s{node} [label="{label(node)}", shape=doublecircle, style=filled, fillcolor=palegreen];')
        else:
            lines.append(f'  s{node} [label="{label(node)}"];')
    for u, v, data in sorted(ng.graph.edges(data=True)):
        attrs = f'label="{names[data["job"]]}"'
        if (u, v) in cycle_edges:
            attrs += ', color=red, penwidth=2'
        lines.append(f'  s{u} -> s{v} [{attrs}];')
    lines.append('}')
    return '\n'.join(lines) + '\n'


# ============================================================================
# CYCLE VERIFICATION
# ============================================================================

def verify_cycle(cfg: PolicyConfig, inst: Instance, states: Sequence[Assignment]) -> Dict:
    """
    Check a closed improving-move sequence exactly

    Every consecutive pair must differ in exactly one job, whose cost key
    strictly drops. Failures are report entries, never exceptions.
    """
    if len(states) < 2:
        raise ValueError("A cycle needs at least two states")

    closed = states[0] == states[-1]
    invalid = {}
    for index, state in enumerate(states):
        try:
            validate_assignment(inst, state)
        except AssignmentError as e:
            invalid[index] = str(e)

    steps = []
    for step, (before, after) in enumerate(zip(states, states[1:]), start=1):
        bad = [invalid[k] for k in (step - 1, step) if k in invalid]
        if bad:
            steps.append({'step': step, 'valid': False, 'error': '; '.join(bad),
                          'movers': [], 'single_mover': False, 'improving': False})
            continue

        movers = [i for i in range(inst.n) if before.machine_of[i] != after.machine_of[i]]
        entry = {'step': step, 'valid': True, 'movers': movers, 'single_mover': len(movers) == 1}

        if len(movers) == 1:
            i = movers[0]
            old_key = cost_key(cfg, inst, before, i, before.machine_of[i])
            new_key = cost_key(cfg, inst, before, i, after.machine_of[i])
            entry.update({
                'job': i,
                'from': before.machine_of[i],
                'to': after.machine_of[i],
                'old_key': old_key,
                'new_key': new_key,
                'improvement': old_key - new_key,
                'improving': new_key < old_key,
            })
        else:
            entry['improving'] = False
        steps.append(entry)

    passed = closed and all(s['single_mover'] and s['improving'] for s in steps)
    if not passed:
        logger.warning(f"⚠️  Cycle verification failed under {cfg.label()}")
    return {'policy': cfg.to_dict(), 'closed': closed, 'steps': steps, 'passed': passed}


# ============================================================================
# POTENTIALS
# ============================================================================

def potential_ccoord(cfg: PolicyConfig, inst: Instance, a: Assignment) -> Fraction:
    """Phi(N) = sum over machines of Psi_(p+1)(N_j)"""
    if cfg.mechanism is not Mechanism.CCOORD:
        raise PolicyError(f"CCOORD potential requested for {cfg.mechanism.value}")
    return sum(
        (psi(cfg.p + 1, [inst.loads[i][j] for i in a.jobs_on(j)]) for j in range(inst.m)),
        Fraction(0),
    )


def potential_acoord_key(cfg: PolicyConfig, inst: Instance, a: Assignment) -> Tuple[Fraction, ...]:
    """Per-job cost keys in ID order; strictly smaller (lexicographically) after any improving move"""
    if cfg.mechanism is not Mechanism.ACOORD:
        raise PolicyError(f"ACOORD potential requested for {cfg.mechanism.value}")
    return tuple(cost_key(cfg, inst, a, i, a.machine_of[i]) for i in range(inst.n))
