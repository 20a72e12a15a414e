"""Cylinder measures and the summable separating-family metric.

A measure is represented by its cylinder frequencies at one depth (plus an
optional product rule that extends Bernoulli measures to any depth).  The
distance D(mu, nu) sums 2^-i |mu(C_i) - nu(C_i)| over the canonical family
of cylinder indicators: depth 0 patterns first, then depth 1, ..., patterns
of equal depth ordered lexicographically.  Truncating at a depth leaves the
rigorously bounded tail 2^-N(depth), N(s) = sum_{t<=s} b^{V_t}, since every
skipped term is at most its family weight.

All comparisons against thresholds are done on [value, value + tail]
intervals; "undecided" is a real outcome, not an error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from ._util import exact_fraction
from .lattice import LatticeBox, LatticeMode, make_box
from .symbolic import Configuration, Pattern, depth_for_epsilon

IN, OUT, UNDECIDED = "in", "out", "undecided"

# family indices beyond this contribute below float resolution; the reported
# tail bound always covers the skipped part (see metric_D)
_INDEX_CUTOFF = 1070
_ENUM_CAP = 1_000_000


class SeparatingFamily:
    """Canonical enumeration of cylinder indicators with weights 2^-i."""

    def __init__(self, alphabet, dim: int, mode: LatticeMode):
        self.alphabet = alphabet
        self.dim = dim
        self.mode = mode

    def volume(self, t: int) -> int:
        return make_box(self.dim, self.mode, t).volume

    def count_through(self, s: int, cap: int | None = None) -> int:
        """N(s): number of family members of depth <= s (capped if asked)."""
        total = 0
        for t in range(s + 1):
            total += self.alphabet.size ** self.volume(t)
            if cap is not None and total > cap:
                return cap + 1
        return total

    def index(self, depth: int, pattern: tuple[int, ...]) -> int:
        """1-based global index of a depth-`depth` pattern cylinder."""
        rank = 0
        for s in pattern:
            rank = rank * self.alphabet.size + int(s)
        before = self.count_through(depth - 1) if depth > 0 else 0
        return before + rank + 1

    def weight(self, depth: int, pattern: tuple[int, ...]) -> Fraction:
        return Fraction(1, 2 ** self.index(depth, pattern))


def _flat_strides(shape: tuple[int, ...]) -> list[int]:
    strides = [1] * len(shape)
    for a in range(len(shape) - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    return strides


def _restrict_indices(outer: LatticeBox, inner_radius: int) -> list[int]:
    """Flat positions (C order) of the Lambda_inner cells inside the outer box."""
    off = outer.mode.low(inner_radius) - outer.mode.low(outer.radius)
    w = outer.mode.width(inner_radius)
    strides = _flat_strides(outer.shape)
    axes = [range(off, off + w)] * outer.dim
    return [sum(s * c for s, c in zip(strides, combo)) for combo in itertools.product(*axes)]


def _decode(code: int, base: int, cells: int) -> tuple[int, ...]:
    out = [0] * cells
    for j in range(cells - 1, -1, -1):
        code, out[j] = divmod(code, base)
    return tuple(out)


class CylinderMeasure:
    """Cylinder frequencies at one depth; marginals to smaller depths are exact.

    `product_p` (cell probabilities) marks a product measure and allows
    frequency tables at any depth.  Frequencies are exact fractions whenever
    the measure was built from exact counts or probabilities.
    """

    def __init__(self, alphabet, dim, mode, depth, freqs, product_p=None, origin="generic"):
        self.alphabet = alphabet
        self.dim = dim
        self.mode = mode
        self.depth = depth
        self.freqs = dict(freqs)
        self.product_p = tuple(product_p) if product_p is not None else None
        self.origin = origin
        self._tables: dict[int, dict] = {depth: self.freqs}
        V = make_box(dim, mode, depth).volume
        for k, v in self.freqs.items():
            if len(k) != V:
                raise ValueError("frequency key has the wrong number of cells")
            if v < 0:
                raise ValueError("negative frequency")
        total = sum(self.freqs.values())
        if isinstance(total, Fraction):
            if total != 1:
                raise ValueError(f"frequencies sum to {total}, not 1")
        elif abs(total - 1.0) > 1e-9:
            raise ValueError(f"frequencies sum to {total}, not 1")

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.freqs.values())

    def family(self) -> SeparatingFamily:
        return SeparatingFamily(self.alphabet, self.dim, self.mode)

    def prob_table(self, t: int) -> dict[tuple[int, ...], object]:
        """Cylinder probabilities at depth t (anchor-0 marginal or product extension)."""
        if t in self._tables:
            return self._tables[t]
        if t < self.depth:
            idx = _restrict_indices(make_box(self.dim, self.mode, self.depth), t)
            table: dict = {}
            for pat, v in self.freqs.items():
                key = tuple(pat[i] for i in idx)
                table[key] = table.get(key, 0) + v
        elif self.product_p is not None:
            V = make_box(self.dim, self.mode, t).volume
            if self.alphabet.size**V > _ENUM_CAP:
                raise ValueError("cylinder enumeration too large at this depth")
            table = {}
            for pat in itertools.product(range(self.alphabet.size), repeat=V):
                p = Fraction(1)
                for s in pat:
                    p *= self.product_p[s]
                if p:
                    table[pat] = p
        else:
            raise ValueError(f"measure holds depth-{self.depth} data; depth {t} unavailable")
        self._tables[t] = table
        return table

    def marginal_consistent(self, tol: float = 1e-9) -> bool:
        """Whether every anchored marginal agrees with the anchor-0 one."""
        if self.product_p is not None:
            return True
        box = make_box(self.dim, self.mode, self.depth)
        strides = _flat_strides(box.shape)
        for t in range(self.depth):
            base = self.prob_table(t)
            wt = self.mode.width(t)
            anchors_w = box.width - wt + 1
            for anchor in itertools.product(range(anchors_w), repeat=self.dim):
                if all(a == 0 for a in anchor):
                    continue
                idx = [
                    sum(s * (a + c) for s, a, c in zip(strides, anchor, combo))
                    for combo in itertools.product(range(wt), repeat=self.dim)
                ]
                table: dict = {}
                for pat, v in self.freqs.items():
                    key = tuple(pat[i] for i in idx)
                    table[key] = table.get(key, 0) + v
                keys = set(base) | set(table)
                if any(abs(float(base.get(k, 0)) - float(table.get(k, 0))) > tol for k in keys):
                    return False
        return True


@dataclass(frozen=True)
class MeasureDistance:
    """Truncated family distance: true D lies in [value, value + tail_bound]."""

    value: float
    tail_bound: float
    depth: int
    value_exact: Fraction | None = None
    tail_exact: Fraction | None = None

    @property
    def lo(self):
        return self.value_exact if self.value_exact is not None else self.value

    @property
    def hi(self):
        if self.value_exact is not None and self.tail_exact is not None:
            return min(self.value_exact + self.tail_exact, Fraction(1))
        return min(self.value + self.tail_bound, 1.0)


def empirical_measure(x: Configuration, box: LatticeBox, depth: int) -> CylinderMeasure:
    """Frequencies of the depth-window patterns seen from every site of the box.

    This is the orbit-average of point masses along the box: the cylinder
    probability of a depth-`depth` pattern is the fraction of box sites whose
    shifted view starts with that pattern.  Exact fractions (denominator =
    box volume).
    """
    if box.dim != x.dim or box.mode is not x.mode:
        raise ValueError("box does not match the configuration lattice")
    dlo = x.mode.low(depth)
    dw = x.mode.width(depth)
    hull_min = tuple(c + dlo for c in box.min_corner)
    hull_shape = tuple(box.width + dw - 1 for _ in range(box.dim))
    field = np.ascontiguousarray(x.window(hull_min, hull_shape).ravel())
    strides = _flat_strides(hull_shape)
    width = box.width
    translates = np.array(
        [
            sum(s * c for s, c in zip(strides, combo))
            for combo in itertools.product(range(width), repeat=box.dim)
        ],
        dtype=np.int64,
    )
    offsets = np.array(
        [
            sum(s * c for s, c in zip(strides, combo))
            for combo in itertools.product(range(dw), repeat=box.dim)
        ],
        dtype=np.int64,
    )
    b = x.alphabet.size
    cells = dw**box.dim
    V = box.volume
    freqs: dict[tuple[int, ...], Fraction] = {}
    if kernels.code_width_ok(b, cells):
        codes = kernels.pattern_codes(field, translates, offsets, b)
        vals, counts = np.unique(codes, return_counts=True)
        for code, cnt in zip(vals.tolist(), counts.tolist()):
            freqs[_decode(int(code), b, cells)] = Fraction(int(cnt), V)
    else:
        flat = field.tolist()
        counts: dict[tuple[int, ...], int] = {}
        offs = offsets.tolist()
        for t in translates.tolist():
            key = tuple(flat[t + o] for o in offs)
            counts[key] = counts.get(key, 0) + 1
        freqs = {k: Fraction(c, V) for k, c in counts.items()}
    return CylinderMeasure(x.alphabet, x.dim, x.mode, depth, freqs, origin="empirical")


def pattern_empirical(pattern: Pattern, depth: int) -> CylinderMeasure:
    """Depth statistics of a finite block over its inside anchors.

    Anchors are the sites whose depth window stays inside the block's box,
    i.e. Lambda_{M-depth}; this is the computable block-level surrogate for
    the orbit average and what block certification tests use.
    """
    box = pattern.box
    if depth > box.radius:
        raise ValueError("depth exceeds the block radius")
    inner = make_box(box.dim, box.mode, box.radius - depth)
    flat = pattern.data.ravel().tolist()
    strides = _flat_strides(box.shape)
    dw = box.mode.width(depth)
    counts: dict[tuple[int, ...], int] = {}
    for anchor in itertools.product(range(inner.width), repeat=box.dim):
        base = sum(s * a for s, a in zip(strides, anchor))
        key = tuple(
            flat[base + sum(s * c for s, c in zip(strides, combo))]
            for combo in itertools.product(range(dw), repeat=box.dim)
        )
        counts[key] = counts.get(key, 0) + 1
    V = inner.volume
    freqs = {k: Fraction(c, V) for k, c in counts.items()}
    return CylinderMeasure(pattern.alphabet, box.dim, box.mode, depth, freqs, origin="block")


def dirac(x: Configuration, depth: int) -> CylinderMeasure:
    """Point mass at x, seen through depth-`depth` cylinders."""
    return empirical_measure(x, make_box(x.dim, x.mode, 0), depth)


def bernoulli(probs, depth: int, dim: int, mode: LatticeMode, alphabet=None) -> CylinderMeasure:
    """Product measure with the given cell distribution (exact decimals)."""
    from .symbolic import Alphabet

    p = [exact_fraction(v) for v in probs]
    if any(v < 0 for v in p):
        raise ValueError("probabilities must be >= 0")
    if sum(p) != 1:
        raise ValueError(f"cell probabilities sum to {float(sum(p))}, not 1")
    alphabet = alphabet or Alphabet(len(p))
    if alphabet.size != len(p):
        raise ValueError("probability vector does not match the alphabet")
    V = make_box(dim, mode, depth).volume
    if alphabet.size**V > _ENUM_CAP:
        raise ValueError("cylinder enumeration too large at this depth")
    freqs = {}
    for pat in itertools.product(range(alphabet.size), repeat=V):
        prob = Fraction(1)
        for s in pat:
            prob *= p[s]
        if prob:
            freqs[pat] = prob
    return CylinderMeasure(alphabet, dim, mode, depth, freqs, product_p=p, origin="bernoulli")


def bernoulli_entropy(probs) -> float:
    """Per-site entropy -sum p ln p of the product measure."""
    p = [float(exact_fraction(v)) for v in probs]
    if any(v < 0 for v in p):
        raise ValueError("probabilities must be >= 0")
    if abs(sum(p) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    return -sum(v * math.log(v) for v in p if v > 0)


def mixture(components) -> CylinderMeasure:
    """Convex combination of measures on the same family and depth."""
    components = [(exact_fraction(w), m) for w, m in components]
    if not components:
        raise ValueError("empty mixture")
    if sum(w for w, _ in components) != 1:
        raise ValueError("mixture weights must sum to 1")
    first = components[0][1]
    freqs: dict = {}
    for w, m in components:
        if (m.alphabet, m.dim, m.mode, m.depth) != (
            first.alphabet,
            first.dim,
            first.mode,
            first.depth,
        ):
            raise ValueError("mixture components disagree on family or depth")
        for k, v in m.freqs.items():
            fv = v if isinstance(v, Fraction) else exact_fraction(v)
            freqs[k] = freqs.get(k, Fraction(0)) + w * fv
    return CylinderMeasure(first.alphabet, first.dim, first.mode, first.depth, freqs, origin="mixture")


def _tail(family: SeparatingFamily, depth: int) -> tuple[float, Fraction]:
    n = family.count_through(depth, cap=_INDEX_CUTOFF)
    n = min(n, _INDEX_CUTOFF)
    return math.ldexp(1.0, -n), Fraction(1, 2**n)


def metric_D(mu: CylinderMeasure, nu: CylinderMeasure, depth: int) -> MeasureDistance:
    """Family distance truncated at `depth`, with its rigorous tail bound.

    Family members beyond index ~2^-1070 are skipped (they are below float
    resolution); the reported tail bound covers them, so [value, value+tail]
    always contains the true distance.
    """
    if (mu.alphabet, mu.dim, mu.mode) != (nu.alphabet, nu.dim, nu.mode):
        raise ValueError("measures live on different families")
    family = mu.family()
    exact = True
    total_f = Fraction(0)
    total = 0.0
    for t in range(depth + 1):
        before = family.count_through(t - 1) if t > 0 else 0
        if before > _INDEX_CUTOFF:
            break
        pm = mu.prob_table(t)
        pn = nu.prob_table(t)
        for key in set(pm) | set(pn):
            i = family.index(t, key)
            if i > _INDEX_CUTOFF:
                continue
            a = pm.get(key, Fraction(0))
            b = pn.get(key, Fraction(0))
            if isinstance(a, Fraction) and isinstance(b, Fraction) and exact:
                total_f += Fraction(1, 2**i) * abs(a - b)
            else:
                exact = False
                total += float(abs(a - b)) / 2.0**i
    tail, tail_f = _tail(family, depth)
    if exact:
        return MeasureDistance(float(total_f), tail, depth, total_f, tail_f)
    return MeasureDistance(total + float(total_f), tail, depth)


def var_bound(eps: float, alphabet, dim: int, mode: LatticeMode) -> float:
    """Upper bound on D(dirac(x), dirac(y)) over all pairs with d(x, y) <= eps.

    Agreement forced on Lambda_s (s = the dyadic band of eps) kills the first
    N(s) family terms, leaving at most 2^-N(s).  For eps >= 1 the bound is
    the metric diameter 1.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if eps >= 1:
        return 1.0
    s = depth_for_epsilon(eps)
    family = SeparatingFamily(alphabet, dim, mode)
    n = min(family.count_through(s, cap=_INDEX_CUTOFF), _INDEX_CUTOFF)
    return math.ldexp(1.0, -n)


def measure_in_ball(mu: CylinderMeasure, center: CylinderMeasure, eta, depth: int) -> str:
    """Tri-state membership of mu in the closed eta-ball around center."""
    eta = exact_fraction(eta)
    d = metric_D(mu, center, depth)
    if d.value_exact is not None:
        if d.value_exact + d.tail_exact <= eta:
            return IN
        if d.value_exact > eta:
            return OUT
        return UNDECIDED
    if d.value + d.tail_bound <= float(eta):
        return IN
    if d.value > float(eta):
        return OUT
    return UNDECIDED


# ---------------------------------------------------------------------------
# measure dump files


def write_measure(path, mu: CylinderMeasure) -> None:
    """Dump: a `<depth>` header line, then `pattern frequency` rows.

    Patterns are symbol digits run together (alphabets up to size 10) or
    space-separated otherwise, in canonical lexicographic order; frequencies
    are written as exact fractions.  Zero-frequency patterns are omitted.
    """
    rows = sorted(mu.freqs.items())
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{mu.depth}\n")
        for pat, v in rows:
            if not v:
                continue
            word = "".join(str(s) for s in pat) if mu.alphabet.size <= 10 else " ".join(str(s) for s in pat)
            fv = v if isinstance(v, Fraction) else Fraction(repr(float(v)))
            fh.write(f"{word} {fv}\n")


def read_measure(path, alphabet, dim: int, mode: LatticeMode) -> CylinderMeasure:
    """Read a measure dump; missing patterns get frequency 0."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        try:
            depth = int(header)
        except ValueError as exc:
            raise ValueError("malformed measure header (want a depth integer)") from exc
        if depth < 0:
            raise ValueError("measure depth must be >= 0")
        V = make_box(dim, mode, depth).volume
        freqs: dict = {}
        for lineno, line in enumerate(fh, start=2):
            toks = line.split()
            if not toks:
                continue
            try:
                freq = Fraction(toks[-1])
            except (ValueError, ZeroDivisionError) as exc:
                raise ValueError(f"line {lineno}: bad frequency {toks[-1]!r}") from exc
            try:
                if len(toks) - 1 == V:
                    pat = tuple(int(t) for t in toks[:-1])
                else:
                    pat = tuple(int(c) for c in toks[0])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-integer symbol") from exc
            if len(pat) != V:
                raise ValueError(f"line {lineno}: expected {V} symbols, got {len(pat)}")
            if any(not 0 <= s < alphabet.size for s in pat):
                raise ValueError(f"line {lineno}: symbol out of range")
            if pat in freqs:
                raise ValueError(f"line {lineno}: duplicate pattern")
            freqs[pat] = freq
    return CylinderMeasure(alphabet, dim, mode, depth, freqs, origin="file")
