"""Counting the dense subsets of a box, and the entropy-rate cost of deficiency.

Q(n, delta) counts subsets A of Lambda_n with |A| >= (1-delta) V_n.  Its
normalized log never exceeds the binary entropy of delta; that margin is
what pays for deficient matches in the separation bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ._util import exact_fraction
from .lattice import LatticeMode, make_box

EXACT_LIMIT = 64  # big-integer enumeration up to this volume, log-gamma above


@dataclass(frozen=True)
class CountBound:
    """Exact count (when volume <= EXACT_LIMIT), its log, and the entropy bound."""

    volume: int
    threshold: int
    exact: int | None
    log_value: float
    bound: float


def binary_entropy(delta) -> float:
    """-delta ln delta - (1-delta) ln(1-delta) for delta in (0, 1)."""
    d = float(exact_fraction(delta))
    if not 0.0 < d < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return -d * math.log(d) - (1.0 - d) * math.log(1.0 - d)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _log_sum(logs) -> float:
    m = max(logs)
    return m + math.log(sum(math.exp(v - m) for v in logs))


def q_count(n: int, delta, dim: int, mode: LatticeMode) -> CountBound:
    """Count subsets of Lambda_n with at least ceil((1-delta) V_n) cells.

    delta is read as an exact decimal, so the threshold is the true ceiling
    of the real product (inclusive when it lands on an integer).
    """
    d = exact_fraction(delta)
    if not 0 < d < 1:
        raise ValueError("delta must be in (0, 1)")
    V = make_box(dim, mode, n).volume
    threshold = math.ceil((1 - d) * V)
    if V <= EXACT_LIMIT:
        exact = sum(math.comb(V, k) for k in range(threshold, V + 1))
        log_value = math.log(exact)
    else:
        exact = None
        log_value = _log_sum([_log_comb(V, k) for k in range(threshold, V + 1)])
    bound = binary_entropy(d) if 0 < d < 1 else float("inf")
    return CountBound(V, threshold, exact, log_value, bound)


def log_q_count(n: int, delta, dim: int, mode: LatticeMode) -> float:
    """Log-gamma evaluation regardless of volume (cross-check backend)."""
    d = exact_fraction(delta)
    if not 0 < d < 1:
        raise ValueError("delta must be in (0, 1)")
    V = make_box(dim, mode, n).volume
    threshold = math.ceil((1 - d) * V)
    return _log_sum([_log_comb(V, k) for k in range(threshold, V + 1)])
