"""
CoordMech - Instance Model
Unrelated-machine scheduling instances, assignments, loads and inefficiencies

An instance is an n x m load matrix: row i is job i, column j is machine j.
Every entry is either a positive exact rational (time units) or infinite,
and infinite entries are simply not part of a job's strategy set.

Formulas:
- w_i,min = min_j w_ij               (minimum load of job i)
- rho_ij  = w_ij / w_i,min >= 1      (inefficiency of job i on machine j)
- L(N_j)  = sum of w_ij over i in N_j
- L(N_j^i) = same sum restricted to jobs with ID <= i
- l_k norm = (sum_j L(N_j)^k)^(1/k), with max_j L <= l_k <= m^(1/k) max_j L
"""

import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

logger = logging.getLogger(__name__)

# None marks an infinite load: the machine is outside the job's strategy set
Load = Optional[Fraction]
RawEntry = Union[int, str, Fraction, None]

INF_TOKENS = ('inf', 'infinity', '∞')
DEFAULT_ROOT_PRECISION = 40


# ============================================================================
# ERRORS
# ============================================================================

class InstanceError(ValueError):
    """Invalid instance or assignment data"""


class InstanceParseError(InstanceError):
    """Instance or assignment document could not be parsed"""


class MalformedInstanceError(InstanceParseError):
    """Document is not valid JSON or does not have the expected shape"""


class NonPositiveLoadError(InstanceParseError):
    """A finite load is zero or negative"""


class InfeasibleRowError(InstanceParseError):
    """A job has an infinite load on every machine"""


class StrategyError(InstanceError):
    """Machine not in strategy set (infinite load)"""


class AssignmentError(InstanceError):
    """Assignment does not fit the instance"""


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class Instance:
    """n x m load matrix with possibly-infinite entries"""

    loads: Tuple[Tuple[Load, ...], ...]
    _strategies: Tuple[Tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _min_loads: Tuple[Fraction, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.loads) < 1:
            raise InstanceError("Instance needs at least one job")
        m = len(self.loads[0])
        if m < 1:
            raise InstanceError("Instance needs at least one machine")

        strategies = []
        min_loads = []
        for i, row in enumerate(self.loads):
            if len(row) != m:
                raise InstanceError(f"Job {i} has {len(row)} loads, expected {m}")
            finite = [j for j, w in enumerate(row) if w is not None]
            for j in finite:
                if not isinstance(row[j], Fraction):
                    raise InstanceError(f"Load ({i},{j}) is not an exact rational: {row[j]!r}")
                if row[j] <= 0:
                    raise NonPositiveLoadError(f"Load ({i},{j}) must be positive, got {row[j]}")
            if not finite:
                raise InfeasibleRowError(f"Job {i} has no machine with finite load")
            strategies.append(tuple(finite))
            min_loads.append(min(row[j] for j in finite))

        object.__setattr__(self, '_strategies', tuple(strategies))
        object.__setattr__(self, '_min_loads', tuple(min_loads))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[RawEntry]]) -> 'Instance':
        """Build from rows of ints, Fractions, decimal strings, 'inf' or None"""
        return cls(tuple(tuple(_coerce_entry(entry) for entry in row) for row in rows))

    @property
    def n(self) -> int:
        return len(self.loads)

    @property
    def m(self) -> int:
        return len(self.loads[0])

    def load(self, i: int, j: int) -> Fraction:
        """Finite load w_ij, or StrategyError when infinite"""
        w = self.loads[i][j]
        if w is None:
            raise StrategyError(f"Machine {j} not in strategy set of job {i}")
        return w

    def state_count(self) -> int:
        """Number of feasible assignments (product of strategy set sizes)"""
        count = 1
        for strategies in self._strategies:
            count *= len(strategies)
        return count

    def permute_jobs(self, perm: Sequence[int]) -> 'Instance':
        """New instance whose job k is this instance's job perm[k]"""
        _check_permutation(perm, self.n)
        return Instance(tuple(self.loads[perm[k]] for k in range(self.n)))


@dataclass(frozen=True)
class Assignment:
    """Map job -> machine; one state of the induced game"""

    machine_of: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'machine_of', tuple(int(j) for j in self.machine_of))

    @property
    def n(self) -> int:
        return len(self.machine_of)

    def jobs_on(self, j: int) -> List[int]:
        return [i for i, machine in enumerate(self.machine_of) if machine == j]

    def move(self, i: int, j: int) -> 'Assignment':
        """Copy of this assignment with job i on machine j"""
        machines = list(self.machine_of)
        machines[i] = j
        return Assignment(tuple(machines))

    def permute_jobs(self, perm: Sequence[int]) -> 'Assignment':
        """Relabel consistently with Instance.permute_jobs(perm)"""
        _check_permutation(perm, self.n)
        return Assignment(tuple(self.machine_of[perm[k]] for k in range(self.n)))

    def to_dict(self) -> Dict:
        return {'machine_of': list(self.machine_of)}


def _check_permutation(perm: Sequence[int], n: int):
    if sorted(perm) != list(range(n)):
        raise InstanceError(f"Not a permutation of 0..{n - 1}: {list(perm)}")


def validate_assignment(inst: Instance, a: Assignment):
    """Raise AssignmentError unless every job sits on a finite-load machine"""
    if a.n != inst.n:
        raise AssignmentError(f"Assignment covers {a.n} jobs, instance has {inst.n}")
    for i, j in enumerate(a.machine_of):
        if not 0 <= j < inst.m:
            raise AssignmentError(f"Job {i} assigned to unknown machine {j}")
        if inst.loads[i][j] is None:
            raise AssignmentError(f"Job {i} assigned to machine {j} with infinite load")


# ============================================================================
# LOADS AND INEFFICIENCIES
# ============================================================================

def strategy_set(inst: Instance, i: int) -> Tuple[int, ...]:
    """Machines with finite load for job i, ascending"""
    return inst._strategies[i]


def min_load(inst: Instance, i: int) -> Fraction:
    """w_i,min"""
    return inst._min_loads[i]


def inefficiency(inst: Instance, i: int, j: int) -> Fraction:
    """rho_ij = w_ij / w_i,min (always >= 1)"""
    return inst.load(i, j) / inst._min_loads[i]


def machine_load(inst: Instance, a: Assignment, j: int) -> Fraction:
    """L(N_j); zero for an empty machine"""
    return sum((inst.loads[i][j] for i, machine in enumerate(a.machine_of) if machine == j), Fraction(0))


def machine_loads(inst: Instance, a: Assignment) -> List[Fraction]:
    loads = [Fraction(0)] * inst.m
    for i, j in enumerate(a.machine_of):
        loads[j] += inst.loads[i][j]
    return loads


def prefix_load(inst: Instance, a: Assignment, j: int, i: int) -> Fraction:
    """L(N_j^i): load on machine j of jobs with ID <= i"""
    return sum(
        (inst.loads[k][j] for k in range(min(i + 1, a.n)) if a.machine_of[k] == j),
        Fraction(0),
    )


def nth_root(x: Fraction, k: int, precision: int = DEFAULT_ROOT_PRECISION) -> float:
    """Real k-th root of a non-negative rational, computed in decimal"""
    if x < 0:
        raise ValueError(f"Cannot take a real root of negative value {x}")
    if x == 0:
        return 0.0
    if k == 1:
        return float(x)
    with localcontext() as ctx:
        ctx.prec = precision
        value = Decimal(x.numerator) / Decimal(x.denominator)
        return float(value ** (Decimal(1) / Decimal(k)))


def lp_norm(values: Sequence[Fraction], k: int, precision: int = DEFAULT_ROOT_PRECISION) -> float:
    """(sum v^k)^(1/k) for non-negative rationals"""
    if k < 1:
        raise ValueError(f"Norm order must be >= 1, got {k}")
    total = sum((Fraction(v) ** k for v in values), Fraction(0))
    return nth_root(total, k, precision)


# ============================================================================
# FILE FORMATS
# ============================================================================

def _coerce_entry(entry: RawEntry) -> Load:
    """One load entry: None / 'inf' -> infinite, otherwise an exact rational"""
    if entry is None:
        return None
    if isinstance(entry, bool):
        raise MalformedInstanceError(f"Boolean is not a load: {entry!r}")
    if isinstance(entry, Fraction):
        return entry
    if isinstance(entry, int):
        return Fraction(entry)
    if isinstance(entry, str):
        token = entry.strip()
        if token.lower() in INF_TOKENS:
            return None
        try:
            return Fraction(token)
        except (ValueError, ZeroDivisionError):
            raise MalformedInstanceError(f"Not a rational literal: {entry!r}")
    raise MalformedInstanceError(f"Unsupported load entry: {entry!r}")


def format_rational(x: Fraction) -> Union[int, str]:
    """Integer when integral, exact decimal string when terminating, else 'a/b'"""
    if x.denominator == 1:
        return x.numerator
    d = x.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{x.numerator}/{x.denominator}"
    scale = max(twos, fives)
    scaled = abs(x.numerator) * (10 ** scale) // x.denominator
    digits = str(scaled).rjust(scale + 1, '0')
    sign = '-' if x < 0 else ''
    return f"{sign}{digits[:-scale]}.{digits[-scale:]}"


def _load_json(text: str) -> Dict:
    try:
        # keep float literals as text so they parse exactly
        document = json.loads(text, parse_float=str, parse_constant=str)
    except json.JSONDecodeError as e:
        raise MalformedInstanceError(f"Invalid JSON: {e}")
    if not isinstance(document, dict):
        raise MalformedInstanceError("Document must be a JSON object")
    return document


def parse_instance(text: str) -> Instance:
    """Parse {"jobs": n, "machines": m, "loads": [[...], ...]}"""
    document = _load_json(text)

    for key in ('jobs', 'machines', 'loads'):
        if key not in document:
            raise MalformedInstanceError(f"Missing field '{key}'")

    n, m, rows = document['jobs'], document['machines'], document['loads']
    if not isinstance(n, int) or not isinstance(m, int) or n < 1 or m < 1:
        raise MalformedInstanceError(f"jobs and machines must be positive integers, got {n!r}, {m!r}")
    if not isinstance(rows, list) or len(rows) != n:
        raise MalformedInstanceError(f"Expected {n} load rows")

    parsed = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != m:
            raise MalformedInstanceError(f"Row {i} must list {m} loads")
        entries = [_coerce_entry(entry) for entry in row]
        for j, w in enumerate(entries):
            if w is not None and w <= 0:
                raise NonPositiveLoadError(f"Load ({i},{j}) must be positive, got {row[j]}")
        if all(w is None for w in entries):
            raise InfeasibleRowError(f"Job {i} has infinite load on every machine")
        parsed.append(tuple(entries))

    return Instance(tuple(parsed))


def serialize_instance(inst: Instance) -> str:
    rows = [
        ['inf' if w is None else format_rational(w) for w in row]
        for row in inst.loads
    ]
    body = ',\n    '.join(json.dumps(row) for row in rows)
    return (
        '{\n'
        f'  "jobs": {inst.n},\n'
        f'  "machines": {inst.m},\n'
        f'  "loads": [\n    {body}\n  ]\n'
        '}\n'
    )


def parse_assignment(text: str, inst: Optional[Instance] = None) -> Assignment:
    """Parse {"machine_of": [j0, j1, ...]}, validated against inst when given"""
    document = _load_json(text)
    machines = document.get('machine_of')
    if not isinstance(machines, list) or not all(isinstance(j, int) and not isinstance(j, bool) for j in machines):
        raise MalformedInstanceError("'machine_of' must be a list of machine indices")
    assignment = Assignment(tuple(machines))
    if inst is not None:
        validate_assignment(inst, assignment)
    return assignment


def serialize_assignment(a: Assignment) -> str:
    return json.dumps(a.to_dict()) + '\n'


def load_instance(path: str) -> Instance:
    with open(path, 'r') as f:
        return parse_instance(f.read())


def save_instance(inst: Instance, path: str):
    with open(path, 'w') as f:
        f.write(serialize_instance(inst))
    logger.info(f"✓ Instance ({inst.n} jobs x {inst.m} machines) written to {path}")


def load_assignment(path: str, inst: Optional[Instance] = None) -> Assignment:
    with open(path, 'r') as f:
        return parse_assignment(f.read(), inst)


# ============================================================================
# STATE NOTATION
# e.g. "(C,B,AD,E)": one group per machine, one letter per job
# ============================================================================

def parse_state(label: str, job_names: Sequence[str], m: int) -> Assignment:
    """Parse a per-machine group label into an Assignment"""
    body = label.strip()
    if body.startswith('(') and body.endswith(')'):
        body = body[1:-1]
    groups = body.split(',')
    if len(groups) != m:
        raise MalformedInstanceError(f"State {label!r} has {len(groups)} groups, expected {m}")

    index = {name: i for i, name in enumerate(job_names)}
    machine_of: List[Optional[int]] = [None] * len(job_names)
    for j, group in enumerate(groups):
        for name in group.strip():
            if name not in index:
                raise MalformedInstanceError(f"Unknown job {name!r} in state {label!r}")
            if machine_of[index[name]] is not None:
                raise MalformedInstanceError(f"Job {name!r} appears twice in state {label!r}")
            machine_of[index[name]] = j

    missing = [job_names[i] for i, j in enumerate(machine_of) if j is None]
    if missing:
        raise MalformedInstanceError(f"State {label!r} does not place jobs {missing}")
    return Assignment(tuple(machine_of))


def format_state(a: Assignment, job_names: Sequence[str], m: int) -> str:
    groups = [''.join(job_names[i] for i in a.jobs_on(j)) for j in range(m)]
    return '(' + ','.join(groups) + ')'
