"""
CoordMech - Psi Engine
Exact evaluation of the Psi_k monomial sums behind the CCOORD policy

Psi_k(A) = k! * sum over 1 <= d_1 <= ... <= d_k <= |A| of a_d1 * ... * a_dk
Psi_0(A) = 1, Psi_k(empty) = 0 for k >= 1, Psi_1(A) = L(A)

Insertion recurrence (used to build the whole table Psi_0..Psi_k):
Psi_k(A + {b}) = sum_{t=0..k} k!/(k-t)! * b^t * Psi_{k-t}(A)

Properties checked by check_psi_properties:
- bounds:        L(A)^k <= Psi_k(A) <= k! L(A)^k
- log-concavity: Psi_{k-1}(A)^k <= Psi_k(A)^(k-1)
- insertion:     the recurrence above, evaluated against the brute-force oracle
- increment:     Psi_k(A + {b}) - Psi_k(A) = k b Psi_{k-1}(A + {b})
- slope:         Psi_k(A) <= k L(A) Psi_{k-1}(A)
- subadditivity: Psi_k(A + {b})^(1/k) <= Psi_k(A)^(1/k) + Psi_k({b})^(1/k)
"""

import logging
from functools import lru_cache
from fractions import Fraction
from itertools import combinations_with_replacement
from math import factorial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from config_loader import get_config
from instance_model import nth_root

logger = logging.getLogger(__name__)


class PsiDomainError(ValueError):
    """Negative order or negative element"""


class PsiCapExceeded(ValueError):
    """Brute-force oracle refused an input above its cap"""


def _normalize(A: Iterable) -> Tuple[Fraction, ...]:
    elements = tuple(sorted(Fraction(a) for a in A))
    if elements and elements[0] < 0:
        raise PsiDomainError(f"Psi is defined on non-negative elements, got {elements[0]}")
    return elements


def _check_order(k: int):
    if k < 0:
        raise PsiDomainError(f"Psi order must be >= 0, got {k}")


def _insert(table: List[Fraction], b: Fraction) -> List[Fraction]:
    """One application of the insertion recurrence to every order at once"""
    k = len(table) - 1
    powers = [Fraction(1)]
    for _ in range(k):
        powers.append(powers[-1] * b)

    updated = []
    for t in range(k + 1):
        total = Fraction(0)
        falling = 1  # t!/(t-s)!
        for s in range(t + 1):
            total += falling * powers[s] * table[t - s]
            falling *= t - s
        updated.append(total)
    return updated


@lru_cache(maxsize=65536)
def _psi_table_cached(k: int, elements: Tuple[Fraction, ...]) -> Tuple[Fraction, ...]:
    table = [Fraction(1)] + [Fraction(0)] * k
    for b in elements:
        table = _insert(table, b)
    return tuple(table)


def psi_table(k: int, A: Iterable) -> List[Fraction]:
    """[Psi_0(A), ..., Psi_k(A)]"""
    _check_order(k)
    return list(_psi_table_cached(k, _normalize(A)))


def psi(k: int, A: Iterable) -> Fraction:
    """Psi_k(A), exact, in O(k^2 |A|) rational operations"""
    _check_order(k)
    return _psi_table_cached(k, _normalize(A))[k]


def psi_bruteforce(k: int, A: Iterable, max_k: Optional[int] = None,
                   max_elements: Optional[int] = None) -> Fraction:
    """
    Direct enumeration of every non-decreasing index tuple (test oracle)

    Refuses inputs above the [limits] psi_max_k / psi_max_elements caps.
    """
    _check_order(k)
    elements = _normalize(A)

    config = get_config()
    if max_k is None:
        max_k = config.get_int('limits', 'psi_max_k', 8)
    if max_elements is None:
        max_elements = config.get_int('limits', 'psi_max_elements', 8)

    if k > max_k:
        raise PsiCapExceeded(f"psi_bruteforce: k={k} above cap psi_max_k={max_k}")
    if len(elements) > max_elements:
        raise PsiCapExceeded(
            f"psi_bruteforce: {len(elements)} elements above cap psi_max_elements={max_elements}"
        )

    if k == 0:
        return Fraction(1)

    total = Fraction(0)
    for indices in combinations_with_replacement(range(len(elements)), k):
        term = Fraction(1)
        for d in indices:
            term *= elements[d]
        total += term
    return factorial(k) * total


def _within(lhs: float, rhs: float, rel_tol: float) -> bool:
    return lhs <= rhs + rel_tol * max(abs(lhs), abs(rhs))


def check_psi_properties(k: int, A: Sequence, b, rel_tol: Optional[float] = None) -> Dict[str, bool]:
    """
    Evaluate every Psi property for one (k, A, b) triple

    All checks are exact except 'subadditivity', which compares real
    k-th roots at relative tolerance and is backed by the exact
    'subadditivity_backstop' Psi_k(A + {b}) <= 2^(k-1) (Psi_k(A) + Psi_k({b})).
    """
    if k < 1:
        raise PsiDomainError(f"Property checks need k >= 1, got {k}")
    if rel_tol is None:
        rel_tol = get_config().get_float('engine', 'relative_tolerance', 1e-9)

    A = list(_normalize(A))
    b = Fraction(b)
    Ab = A + [b]
    L = sum(A, Fraction(0))

    table = psi_table(k, A)
    table_b = psi_table(k, Ab)
    single = psi(k, [b])

    insertion_rhs = sum(
        (Fraction(factorial(k), factorial(k - t)) * b ** t * psi_bruteforce(k - t, A) for t in range(k + 1)),
        Fraction(0),
    )

    root_lhs = nth_root(table_b[k], k)
    root_rhs = nth_root(table[k], k) + nth_root(single, k)

    results = {
        'bounds': L ** k <= table[k] <= factorial(k) * L ** k,
        'log_concavity': table[k - 1] ** k <= table[k] ** (k - 1),
        'insertion': table_b[k] == insertion_rhs,
        'increment': table_b[k] - table[k] == k * b * table_b[k - 1],
        'slope': table[k] <= k * L * table[k - 1],
        'subadditivity': _within(root_lhs, root_rhs, rel_tol),
        'subadditivity_backstop': table_b[k] <= 2 ** (k - 1) * (table[k] + single),
        'singleton': single == factorial(k) * b ** k,
        'monotone_roots': all(
            table[lo] ** hi <= table[hi] ** lo
            for lo in range(1, k + 1) for hi in range(lo + 1, k + 1)
        ),
    }

    failed = [name for name, ok in results.items() if not ok]
    if failed:
        logger.warning(f"⚠️  Psi properties failed for k={k}, A={A}, b={b}: {failed}")
    return results
