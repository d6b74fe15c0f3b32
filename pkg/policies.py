"""
CoordMech - Scheduling Policies
Completion times and exact cost keys for the seven coordination mechanisms

Completion time of job i on machine j (N_j includes i):
- Makespan:      L(N_j)
- ShortestFirst: loads of jobs scheduled up to and including i, ascending load
- LongestFirst:  same, descending load
- Randomized:    1/2 (w_ij + L(N_j))        (expectation over random orders)
- ACOORD:        rho_ij^(1/p) * L(N_j^i)     (only lower IDs delay job i)
- BCOORD:        rho_ij^(1/p) * L(N_j)
- CCOORD:        (rho_ij * Psi_p(N_j))^(1/p)

Equal loads under ShortestFirst / LongestFirst run in ascending job ID order.

Cost keys are exact rationals, strictly increasing in the completion time
for a fixed job, so every best-response and equilibrium decision is exact:
- Makespan:      L(N'_j)
- SF / LF:       the completion time itself
- Randomized:    w_ij + L(N'_j)              (twice the expectation)
- ACOORD:        w_ij * (L(N_j^(i-1)) + w_ij)^p
- BCOORD:        w_ij * (L(N_j \\ i) + w_ij)^p
- CCOORD:        w_ij * Psi_p(N'_j)
For the root mechanisms key = w_i,min * completion^p.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from config_loader import get_config
from instance_model import (
    Assignment,
    AssignmentError,
    Instance,
    inefficiency,
    machine_loads,
    min_load,
    nth_root,
    prefix_load,
    validate_assignment,
)
from psi import psi

logger = logging.getLogger(__name__)


class PolicyError(ValueError):
    """Unknown mechanism, invalid p, or operation not defined for the mechanism"""


class Mechanism(str, Enum):
    MAKESPAN = 'makespan'
    SHORTEST_FIRST = 'shortestfirst'
    LONGEST_FIRST = 'longestfirst'
    RANDOMIZED = 'randomized'
    ACOORD = 'acoord'
    BCOORD = 'bcoord'
    CCOORD = 'ccoord'

    @classmethod
    def parse(cls, name: str) -> 'Mechanism':
        key = name.strip().lower().replace('-', '').replace('_', '')
        for mechanism in cls:
            if mechanism.value == key:
                return mechanism
        raise PolicyError(f"Unknown policy '{name}' (expected one of {', '.join(m.value for m in cls)})")

    @property
    def anonymous(self) -> bool:
        """True when completion times ignore job IDs"""
        return self in (Mechanism.MAKESPAN, Mechanism.RANDOMIZED, Mechanism.BCOORD, Mechanism.CCOORD)


ROOT_MECHANISMS = (Mechanism.ACOORD, Mechanism.BCOORD, Mechanism.CCOORD)
ALL_MECHANISMS = tuple(Mechanism)


def auto_p(m: int) -> int:
    """max(1, ceil(log2 m))"""
    return max(1, (m - 1).bit_length())


@dataclass(frozen=True)
class PolicyConfig:
    """Mechanism plus its integer parameter p; fixes the induced game"""

    mechanism: Mechanism
    p: int = 1

    def __post_init__(self):
        if not isinstance(self.mechanism, Mechanism):
            object.__setattr__(self, 'mechanism', Mechanism.parse(str(self.mechanism)))
        if not isinstance(self.p, int) or isinstance(self.p, bool) or self.p < 1:
            raise PolicyError(f"p must be an integer >= 1, got {self.p!r}")

    @classmethod
    def for_instance(cls, mechanism, m: int, p: Optional[int] = None) -> 'PolicyConfig':
        """Explicit p, else [engine] default_p, else max(1, ceil(log2 m))"""
        if p is None:
            p = get_config().default_p()
        if p is None:
            p = auto_p(m)
        return cls(mechanism if isinstance(mechanism, Mechanism) else Mechanism.parse(mechanism), p)

    @classmethod
    def from_epsilon(cls, mechanism, epsilon) -> 'PolicyConfig':
        """p = 1/epsilon - 1 for epsilon in (0, 1/2]; epsilon is the m^epsilon exponent"""
        eps = Fraction(str(epsilon)) if not isinstance(epsilon, Fraction) else epsilon
        if not 0 < eps <= Fraction(1, 2):
            raise PolicyError(f"epsilon must lie in (0, 1/2], got {epsilon}")
        p = 1 / eps - 1
        if p.denominator != 1:
            raise PolicyError(f"1/epsilon - 1 must be an integer, got {p}")
        return cls(mechanism if isinstance(mechanism, Mechanism) else Mechanism.parse(mechanism), int(p))

    @property
    def exponent(self) -> int:
        """Power at which completion times become exact rationals"""
        return self.p if self.mechanism in ROOT_MECHANISMS else 1

    def label(self) -> str:
        if self.mechanism in ROOT_MECHANISMS:
            return f"{self.mechanism.value}(p={self.p})"
        return self.mechanism.value

    def to_dict(self) -> Dict:
        return {'mechanism': self.mechanism.value, 'p': self.p}


# ============================================================================
# COST KEYS
# ============================================================================

def _others_on(inst: Instance, a: Assignment, i: int, j: int) -> List[int]:
    return [k for k, machine in enumerate(a.machine_of) if machine == j and k != i]


def cost_key(cfg: PolicyConfig, inst: Instance, a: Assignment, i: int, j: int) -> Fraction:
    """
    Exact key of job i on machine j with every other job fixed

    For j = a.machine_of[i] this is the current cost; otherwise the cost
    after a unilateral deviation. Raises StrategyError when w_ij is infinite.
    """
    w = inst.load(i, j)
    others = _others_on(inst, a, i, j)
    mechanism = cfg.mechanism

    if mechanism is Mechanism.MAKESPAN:
        return w + sum((inst.loads[k][j] for k in others), Fraction(0))

    if mechanism is Mechanism.SHORTEST_FIRST:
        ahead = [k for k in others if (inst.loads[k][j], k) < (w, i)]
        return w + sum((inst.loads[k][j] for k in ahead), Fraction(0))

    if mechanism is Mechanism.LONGEST_FIRST:
        ahead = [k for k in others if inst.loads[k][j] > w or (inst.loads[k][j] == w and k < i)]
        return w + sum((inst.loads[k][j] for k in ahead), Fraction(0))

    if mechanism is Mechanism.RANDOMIZED:
        return 2 * w + sum((inst.loads[k][j] for k in others), Fraction(0))

    if mechanism is Mechanism.ACOORD:
        lower = prefix_load(inst, a, j, i - 1)
        return w * (lower + w) ** cfg.p

    if mechanism is Mechanism.BCOORD:
        rest = sum((inst.loads[k][j] for k in others), Fraction(0))
        return w * (rest + w) ** cfg.p

    if mechanism is Mechanism.CCOORD:
        return w * psi(cfg.p, [inst.loads[k][j] for k in others] + [w])

    raise PolicyError(f"No cost key for mechanism {mechanism}")


def key_to_power(cfg: PolicyConfig, inst: Instance, i: int, key: Fraction) -> Fraction:
    """Completion time raised to cfg.exponent, from job i's cost key"""
    if cfg.mechanism in ROOT_MECHANISMS:
        return key / min_load(inst, i)
    if cfg.mechanism is Mechanism.RANDOMIZED:
        return key / 2
    return key


def _current_machine(inst: Instance, a: Assignment, i: int) -> int:
    j = a.machine_of[i]
    if not 0 <= j < inst.m or inst.loads[i][j] is None:
        raise AssignmentError(f"Job {i} sits on machine {j}, which is outside its strategy set")
    return j


def completion_power(cfg: PolicyConfig, inst: Instance, a: Assignment, i: int) -> Fraction:
    """Exact completion^e (e = p for ACOORD/BCOORD/CCOORD, 1 otherwise); comparable across jobs"""
    j = _current_machine(inst, a, i)
    return key_to_power(cfg, inst, i, cost_key(cfg, inst, a, i, j))


def completion_time(cfg: PolicyConfig, inst: Instance, a: Assignment, i: int,
                    precision: Optional[int] = None) -> float:
    """Completion time of job i in state a, as a real"""
    if precision is None:
        precision = get_config().get_int('engine', 'root_precision', 40)
    return nth_root(completion_power(cfg, inst, a, i), cfg.exponent, precision)


def hypothetical_completion(cfg: PolicyConfig, inst: Instance, a: Assignment, i: int, j: int,
                            precision: Optional[int] = None) -> float:
    """Completion time job i would have after deviating to machine j"""
    if precision is None:
        precision = get_config().get_int('engine', 'root_precision', 40)
    power = key_to_power(cfg, inst, i, cost_key(cfg, inst, a, i, j))
    return nth_root(power, cfg.exponent, precision)


# ============================================================================
# FEASIBILITY
# ============================================================================

def _realized_powers(cfg: PolicyConfig, inst: Instance, a: Assignment, jobs: Sequence[int], j: int) -> Dict[int, Fraction]:
    """Exact completion^e per job on one machine"""
    if cfg.mechanism is Mechanism.RANDOMIZED:
        # one realization of the random order (ascending ID); every realization is a sequential schedule
        realized = {}
        elapsed = Fraction(0)
        for k in sorted(jobs):
            elapsed += inst.loads[k][j]
            realized[k] = elapsed
        return realized
    return {k: completion_power(cfg, inst, a, k) for k in jobs}


def check_feasibility(cfg: PolicyConfig, inst: Instance, a: Assignment) -> Dict:
    """
    Check that a schedule with these completion times exists

    For every job i on machine j: total load of jobs on j with completion
    time <= C_i (ties included) must be <= C_i. Compared exactly as
    S^e <= C_i^e. Randomized is checked on a realized random order, since
    expected completion times are not themselves a schedule.
    """
    validate_assignment(inst, a)
    e = cfg.exponent
    checked = 0

    for j in range(inst.m):
        jobs = a.jobs_on(j)
        if not jobs:
            continue
        powers = _realized_powers(cfg, inst, a, jobs, j)
        for i in jobs:
            finished = sum((inst.loads[k][j] for k in jobs if powers[k] <= powers[i]), Fraction(0))
            checked += 1
            if finished ** e > powers[i]:
                logger.warning(f"⚠️  Infeasible completion for job {i} on machine {j} under {cfg.label()}")
                return {
                    'passed': False,
                    'violation': {
                        'job': i,
                        'machine': j,
                        'finished_load': str(finished),
                        'completion_power': str(powers[i]),
                    },
                    'checked': checked,
                }

    return {'passed': True, 'violation': None, 'checked': checked}


# ============================================================================
# REPORTING
# ============================================================================

def render(value: float, digits: Optional[int] = None) -> str:
    if digits is None:
        digits = get_config().get_int('engine', 'render_digits', 12)
    return f"{value:.{digits}g}"


def evaluate_state(cfg: PolicyConfig, inst: Instance, a: Assignment,
                   job_names: Optional[Sequence[str]] = None) -> Dict:
    """Per-job completion rows, per-machine loads and the feasibility report"""
    validate_assignment(inst, a)
    names = list(job_names) if job_names else [str(i) for i in range(inst.n)]

    jobs = []
    for i in range(inst.n):
        j = a.machine_of[i]
        key = cost_key(cfg, inst, a, i, j)
        jobs.append({
            'job': names[i],
            'machine': j,
            'load': str(inst.loads[i][j]),
            'inefficiency': str(inefficiency(inst, i, j)),
            'cost_key': str(key),
            'completion': render(completion_time(cfg, inst, a, i)),
        })

    return {
        'policy': cfg.to_dict(),
        'jobs': jobs,
        'machine_loads': [str(load) for load in machine_loads(inst, a)],
        'feasibility': check_feasibility(cfg, inst, a),
    }
