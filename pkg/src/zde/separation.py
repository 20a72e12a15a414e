"""Separated sets, spanning sets, and ball-count entropy at dyadic scales.

At a dyadic scale eps in [2^-(r+1), 2^-r), window separation and window
agreement are complementary pattern predicates on the r-inflated window, so
separated counts, spanning counts, and measure ball counts are all exact
combinatorics on cylinders.  (Symbol systems are expansive: below the symbol
scale nothing new happens, which is why a single band per eps suffices and
no eps -> 0 limit is ever taken here; every number reported is a finite-scale
estimate, never a limit.)
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._util import exact_fraction
from .lattice import LatticeMode, make_box
from .measures import CylinderMeasure
from .symbolic import Configuration, depth_for_epsilon

EXACT_POINT_CAP = 4096


@dataclass(frozen=True)
class FullShift:
    """All configurations on the lattice; counts have closed forms."""

    alphabet: object
    dim: int
    mode: LatticeMode


@dataclass
class SeparationReport:
    n: int
    epsilon: float
    count: int
    method: str
    witnesses: list[int] = field(default_factory=list)
    classes: int | None = None


def _window_keys(points, n: int, epsilon: float) -> list[bytes]:
    """Pattern key of each point on the eps-inflated window."""
    r = depth_for_epsilon(epsilon)
    first = points[0]
    box = make_box(first.dim, first.mode, n + r)
    keys = []
    for x in points:
        if x.dim != first.dim or x.mode is not first.mode:
            raise ValueError("points live on different lattices")
        keys.append(x.window(box.min_corner, box.shape).tobytes())
    return keys


def _max_clique(adj: list[int]) -> list[int]:
    """Maximum clique via branch and bound with a popcount bound (bitset ints)."""
    best: list[int] = []

    def expand(chosen: list[int], cand: int):
        nonlocal best
        while cand:
            if len(chosen) + bin(cand).count("1") <= len(best):
                return
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            chosen.append(v)
            nxt = cand & adj[v]
            if nxt:
                expand(chosen, nxt)
            elif len(chosen) > len(best):
                best = list(chosen)
            chosen.pop()

    full = (1 << len(adj)) - 1
    if full:
        expand([], full)
    return best


def max_separated(points, n: int, epsilon: float, method: str = "EXACT") -> SeparationReport:
    """Largest pairwise (n, eps)-separated subset (EXACT) or a maximal one (GREEDY).

    Separation of a pair means some translate in Lambda_n pushes them at
    distance > eps, i.e. their patterns on the inflated window differ.
    EXACT runs branch and bound on the distinguishability graph and refuses
    more than EXACT_POINT_CAP points.
    """
    method = method.upper()
    if method not in ("EXACT", "GREEDY"):
        raise ValueError("method must be EXACT or GREEDY")
    points = list(points)
    if not points:
        return SeparationReport(n, epsilon, 0, method)
    if epsilon >= 1.0:
        # distances never exceed 1, so no pair separates
        return SeparationReport(n, epsilon, 1, method, witnesses=[0], classes=None)
    keys = _window_keys(points, n, epsilon)
    classes = len(set(keys))
    if method == "GREEDY":
        kept: list[int] = []
        seen: set[bytes] = set()
        for i, k in enumerate(keys):
            if k not in seen:
                kept.append(i)
                seen.add(k)
        return SeparationReport(n, epsilon, len(kept), method, kept, classes)
    if len(points) > EXACT_POINT_CAP:
        raise ValueError(f"EXACT refuses more than {EXACT_POINT_CAP} points; use GREEDY")
    adj = [0] * len(points)
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            if keys[i] != keys[j]:
                adj[i] |= 1 << j
                adj[j] |= 1 << i
    witnesses = _max_clique(adj)
    return SeparationReport(n, epsilon, len(witnesses), method, sorted(witnesses), classes)


def delta_separated(x, y, n: int, delta, epsilon: float) -> bool:
    """Whether translates at distance > eps fill more than a delta fraction of the box."""
    if epsilon >= 1.0:
        return False
    r = depth_for_epsilon(epsilon)
    box = make_box(x.dim, x.mode, n)
    big = make_box(x.dim, x.mode, n + r)
    wx = x.window(big.min_corner, big.shape)
    wy = y.window(big.min_corner, big.shape)
    diff = wx != wy
    rw = x.mode.width(r)
    count = 0
    for cell in itertools.product(range(box.width), repeat=box.dim):
        sl = tuple(slice(c, c + rw) for c in cell)
        if diff[sl].any():
            count += 1
    return count > exact_fraction(delta) * box.volume


@dataclass(frozen=True)
class SpanningReport:
    n: int
    epsilon: float
    count: int
    method: str


def spanning_count(alphabet, dim: int, mode: LatticeMode, n: int, epsilon: float) -> int:
    """Minimal (n, eps)-spanning count of the full shift: b^{V_{n+r}}, exactly.

    Closed eps-balls are cylinders on the inflated window; distinct window
    patterns need distinct centers and every pattern is realized.
    """
    if epsilon >= 1.0:
        return 1
    r = depth_for_epsilon(epsilon)
    return alphabet.size ** make_box(dim, mode, n + r).volume


def min_spanning(target, n: int, epsilon: float) -> SpanningReport:
    """Minimal spanning count: closed form on the full shift, set cover on point lists."""
    if isinstance(target, FullShift):
        return SpanningReport(n, epsilon, spanning_count(target.alphabet, target.dim, target.mode, n, epsilon), "closed-form")
    points = list(target)
    if not points:
        return SpanningReport(n, epsilon, 0, "cover")
    if epsilon >= 1.0:
        return SpanningReport(n, epsilon, 1, "cover")
    keys = _window_keys(points, n, epsilon)
    greedy = len(set(keys))
    if len(points) <= 20:
        # brute-force cross-check: balls are agreement classes, so the greedy
        # answer must already be optimal; verify by subset search
        for size in range(1, len(points) + 1):
            hit = False
            for combo in itertools.combinations(range(len(points)), size):
                covered = {keys[i] for i in combo}
                if all(k in covered for k in keys):
                    hit = True
                    break
            if hit:
                if size != greedy:
                    raise AssertionError("set-cover fallback disagrees with class count")
                return SpanningReport(n, epsilon, size, "exact-cover")
    return SpanningReport(n, epsilon, greedy, "greedy-cover")


@dataclass(frozen=True)
class EntropyEstimate:
    rows: tuple  # (radius, volume, estimate)
    estimate: float
    trend: tuple

    @property
    def finite_scale(self) -> bool:
        return True


def entropy_from_counts(counts, dim: int, mode: LatticeMode) -> EntropyEstimate:
    """Normalize window counts: rows (n, V_n, ln count / V_n); no limits taken."""
    rows = []
    for n, c in counts:
        if c < 1:
            raise ValueError("counts must be >= 1")
        V = make_box(dim, mode, n).volume
        rows.append((n, V, math.log(c) / V))
    if not rows:
        raise ValueError("no counts given")
    rows.sort()
    trend = tuple(b[2] - a[2] for a, b in zip(rows, rows[1:]))
    return EntropyEstimate(tuple(rows), rows[-1][2], trend)


@dataclass(frozen=True)
class KatokCount:
    count: int
    estimate: float
    n: int
    epsilon: float
    delta: object
    window_depth: int


def _composition_ball_count(p, V: int, target: Fraction) -> int:
    """Minimal number of product-measure cylinders with mass > target.

    Cylinders sharing a symbol histogram share their probability, so sort
    histogram classes by probability and take whole classes greedily, then
    the exact partial count from the last class.  Exact rational arithmetic.
    """
    b = len(p)
    classes = []
    for combo in itertools.combinations(range(V + b - 1), b - 1):
        ks = []
        prev = -1
        for c in combo:
            ks.append(c - prev - 1)
            prev = c
        ks.append(V + b - 2 - prev)
        prob = Fraction(1)
        for s, k in enumerate(ks):
            if k:
                prob *= p[s] ** k
        if prob == 0:
            continue
        mult = math.factorial(V)
        for k in ks:
            mult //= math.factorial(k)
        classes.append((prob, tuple(ks), mult))
    classes.sort(key=lambda t: (-t[0], t[1]))
    cum = Fraction(0)
    total = 0
    for prob, _, mult in classes:
        if cum + prob * mult > target:
            need = (target - cum) // prob + 1
            return total + int(need)
        cum += prob * mult
        total += mult
    raise ValueError("measure mass never exceeds the target; delta out of range")


def katok_entropy(mu: CylinderMeasure, n: int, epsilon: float, delta) -> KatokCount:
    """Minimal number of (n, eps)-balls of total mass above 1 - delta.

    Balls at a dyadic band are disjoint cylinders on the inflated window, so
    the optimum is greedy by mass (canonical pattern order breaks ties).
    The estimate is ln(count) / V_n, normalized by the bare box volume.
    """
    d = exact_fraction(delta)
    if not 0 < d < 1:
        raise ValueError("delta must be in (0, 1)")
    if epsilon >= 1.0:
        return KatokCount(1, 0.0, n, epsilon, delta, 0)
    r = depth_for_epsilon(epsilon)
    w = n + r
    V_n = make_box(mu.dim, mu.mode, n).volume
    target = 1 - d
    if mu.product_p is not None:
        V_w = make_box(mu.dim, mu.mode, w).volume
        count = _composition_ball_count(mu.product_p, V_w, target)
    else:
        table = mu.prob_table(w)  # raises if the measure lacks this depth
        items = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
        cum = 0
        count = 0
        for _, v in items:
            count += 1
            cum = cum + v
            if cum > target:
                break
        else:
            raise ValueError("measure mass never exceeds the target; delta out of range")
    return KatokCount(count, math.log(count) / V_n, n, epsilon, delta, w)
