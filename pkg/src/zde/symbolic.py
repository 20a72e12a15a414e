"""Symbol arrays over Z^d / Z_+^d: patterns, lazy configurations, the dyadic metric.

A configuration is a total rule assigning a symbol to every lattice site;
realizations here are constant fields, periodic fields, and block tilings
(a grid of Lambda_M-shaped blocks read through an index rule, optionally
shifted inside the block cell).  Patterns are finite windows of symbols in
canonical cell order (lexicographic on coordinates, i.e. C order).

Distances: d(x, y) = 2^-rho where rho is the first box depth at which the
two configurations disagree.  Window distances take the max over translates
inside the window and are exactly decidable from finite data at any dyadic
threshold: with eps in the band [2^-(r+1), 2^-r), "d > eps" is pattern
inequality on the r-inflated window and "d <= eps" is pattern equality.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._util import keyed_choice
from .lattice import LatticeBox, LatticeMode, make_box


@dataclass(frozen=True)
class Alphabet:
    """Finite alphabet {0, ..., size-1}, size >= 2."""

    size: int

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("alphabet needs at least two symbols")

    def symbols(self):
        return range(self.size)


class Pattern:
    """Symbols on a box, canonical C-order layout."""

    __slots__ = ("box", "alphabet", "data")

    def __init__(self, box: LatticeBox, data, alphabet: Alphabet):
        arr = np.asarray(data, dtype=np.int64)
        if arr.shape != box.shape:
            arr = arr.reshape(box.shape)
        if arr.size and (arr.min() < 0 or arr.max() >= alphabet.size):
            raise ValueError("symbol out of range for the alphabet")
        arr.flags.writeable = False
        self.box = box
        self.alphabet = alphabet
        self.data = arr

    def key(self) -> bytes:
        return self.data.tobytes()

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.data.ravel())

    def __eq__(self, other):
        return (
            isinstance(other, Pattern)
            and self.box == other.box
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.box, self.key()))

    def __repr__(self):
        flat = "".join(str(s) for s in self.data.ravel()[:12])
        dots = "..." if self.data.size > 12 else ""
        return f"Pattern(r={self.box.radius}, {flat}{dots})"


# ---------------------------------------------------------------------------
# block index rules


class BlockRule:
    """Maps a block-grid index vector to an index into the block list."""

    def index_of(self, i: tuple[int, ...]) -> int:
        raise NotImplementedError


class ConstantRule(BlockRule):
    def __init__(self, index: int):
        self.index = index

    def index_of(self, i):
        return self.index


class CyclicRule(BlockRule):
    """Coordinate-sum cycling; gives alternating stripes for count=2."""

    def __init__(self, count: int):
        self.count = count

    def index_of(self, i):
        return sum(i) % self.count


class ExplicitRule(BlockRule):
    """Dict-backed assignment with a default elsewhere."""

    def __init__(self, mapping: dict, default: int = 0):
        self.mapping = dict(mapping)
        self.default = default

    def index_of(self, i):
        return self.mapping.get(tuple(i), self.default)


class SeededRule(BlockRule):
    """Counter-based pseudorandom assignment, pure in (seed, i)."""

    def __init__(self, seed: int, count: int):
        self.seed = seed
        self.count = count

    def index_of(self, i):
        return keyed_choice(self.seed, self.count, 0x52, *i)


class ShiftedRule(BlockRule):
    def __init__(self, base: BlockRule, by: tuple[int, ...]):
        self.base = base
        self.by = tuple(by)

    def index_of(self, i):
        return self.base.index_of(tuple(a + b for a, b in zip(i, self.by)))


# ---------------------------------------------------------------------------
# configurations


class Configuration:
    """Total symbol field.  Subclasses implement at() and (preferably) window()."""

    dim: int
    mode: LatticeMode
    alphabet: Alphabet

    def at(self, v: tuple[int, ...]) -> int:
        raise NotImplementedError

    def window(self, origin: tuple[int, ...], shape: tuple[int, ...]) -> np.ndarray:
        self._check_origin(origin)
        out = np.empty(shape, dtype=np.int64)
        for idx in itertools.product(*(range(s) for s in shape)):
            out[idx] = self.at(tuple(o + k for o, k in zip(origin, idx)))
        return out

    def shifted(self, v: tuple[int, ...]) -> "Configuration":
        return ShiftedConfiguration(self, tuple(v))

    def _check_origin(self, origin):
        if len(origin) != self.dim:
            raise ValueError("origin dimension mismatch")
        if self.mode is LatticeMode.POSITIVE and any(c < 0 for c in origin):
            raise ValueError("one-sided configurations have no sites at negative coordinates")

    def _check_shift(self, v):
        if len(v) != self.dim:
            raise ValueError("shift dimension mismatch")
        if self.mode is LatticeMode.POSITIVE and any(c < 0 for c in v):
            raise ValueError("one-sided shifts must be componentwise >= 0")


class ConstantConfiguration(Configuration):
    def __init__(self, symbol: int, dim: int, mode: LatticeMode, alphabet: Alphabet):
        if not 0 <= symbol < alphabet.size:
            raise ValueError("symbol out of range")
        self.symbol = symbol
        self.dim = dim
        self.mode = mode
        self.alphabet = alphabet

    def at(self, v):
        self._check_origin(v)
        return self.symbol

    def window(self, origin, shape):
        self._check_origin(origin)
        return np.full(shape, self.symbol, dtype=np.int64)

    def shifted(self, v):
        self._check_shift(v)
        return self


class ShiftedConfiguration(Configuration):
    """View of base shifted by v: value at j is base(j + v)."""

    def __init__(self, base: Configuration, v: tuple[int, ...]):
        base._check_shift(v)
        self.base = base
        self.vector = tuple(v)
        self.dim = base.dim
        self.mode = base.mode
        self.alphabet = base.alphabet

    def at(self, j):
        return self.base.at(tuple(a + b for a, b in zip(j, self.vector)))

    def window(self, origin, shape):
        self._check_origin(origin)
        return self.base.window(tuple(a + b for a, b in zip(origin, self.vector)), shape)

    def shifted(self, v):
        self._check_shift(v)
        return ShiftedConfiguration(self.base, tuple(a + b for a, b in zip(self.vector, v)))


class BlockTilingConfiguration(Configuration):
    """Grid of Lambda_M blocks read through an index rule, then shifted by `offset`.

    Site j reads the grid point w = j + offset; w sits in block cell i
    (w in i*D_M + Lambda_M) and the symbol is blocks[rule(i)] at the local
    position.  Shifting by any lattice vector stays inside this family:
    the combined displacement renormalizes into (rule shifted on the grid,
    offset back inside Lambda_M).
    """

    def __init__(self, blocks, M: int, rule: BlockRule, offset, mode: LatticeMode, alphabet: Alphabet):
        arr = blocks if isinstance(blocks, np.ndarray) else np.stack([p.data for p in blocks])
        if arr.ndim < 2:
            raise ValueError("blocks array must be (count, *box shape)")
        self.blocks = np.ascontiguousarray(arr, dtype=np.int64)
        self.M = M
        self.rule = rule
        self.dim = arr.ndim - 1
        self.mode = mode
        self.alphabet = alphabet
        self.D = mode.width(M)
        self.lo = mode.low(M)
        if arr.shape[1:] != (self.D,) * self.dim:
            raise ValueError("block shape does not match Lambda_M")
        offset = tuple(offset)
        if len(offset) != self.dim or any(not (self.lo <= c <= self.lo + self.D - 1) for c in offset):
            raise ValueError("offset must lie in Lambda_M")
        self.offset = offset

    def _split(self, w: int) -> tuple[int, int]:
        # block-grid index and local array index along one axis
        i = (w - self.lo) // self.D
        return i, w - i * self.D - self.lo

    def at(self, j):
        self._check_origin(j)
        idx = []
        loc = []
        for a in range(self.dim):
            i, t = self._split(j[a] + self.offset[a])
            idx.append(i)
            loc.append(t)
        return int(self.blocks[self.rule.index_of(tuple(idx))][tuple(loc)])

    def window(self, origin, shape):
        self._check_origin(origin)
        out = np.empty(shape, dtype=np.int64)
        per_axis = []
        for a in range(self.dim):
            w0 = origin[a] + self.offset[a]
            w1 = w0 + shape[a] - 1
            i_lo = (w0 - self.lo) // self.D
            i_hi = (w1 - self.lo) // self.D
            spans = []
            for i in range(i_lo, i_hi + 1):
                blk0 = i * self.D + self.lo
                a0 = max(w0, blk0)
                a1 = min(w1, blk0 + self.D - 1)
                spans.append((i, slice(a0 - w0, a1 - w0 + 1), slice(a0 - blk0, a1 - blk0 + 1)))
            per_axis.append(spans)
        for combo in itertools.product(*per_axis):
            grid = tuple(c[0] for c in combo)
            out_sl = tuple(c[1] for c in combo)
            blk_sl = tuple(c[2] for c in combo)
            out[out_sl] = self.blocks[self.rule.index_of(grid)][blk_sl]
        return out

    def shifted(self, v):
        self._check_shift(v)
        total = tuple(o + s for o, s in zip(self.offset, v))
        grid_step = []
        new_offset = []
        for w in total:
            i, t = self._split(w)
            grid_step.append(i)
            new_offset.append(t + self.lo)
        rule = self.rule if all(g == 0 for g in grid_step) else ShiftedRule(self.rule, tuple(grid_step))
        return BlockTilingConfiguration(
            self.blocks, self.M, rule, tuple(new_offset), self.mode, self.alphabet
        )


def periodic(pattern: Pattern) -> BlockTilingConfiguration:
    """Tile one pattern periodically (period = its box width per axis)."""
    box = pattern.box
    return BlockTilingConfiguration(
        pattern.data[np.newaxis, ...], box.radius, ConstantRule(0),
        (0,) * box.dim, box.mode, pattern.alphabet,
    )


def shift(x: Configuration, v) -> Configuration:
    """The shift action: shift(x, v) evaluated at j is x at j + v."""
    return x.shifted(tuple(v))


def pattern_at(x: Configuration, box: LatticeBox, origin) -> Pattern:
    """Pattern of x on origin + box."""
    origin = tuple(origin)
    if len(origin) != x.dim or box.dim != x.dim:
        raise ValueError("dimension mismatch")
    start = tuple(o + c for o, c in zip(origin, box.min_corner))
    return Pattern(box, x.window(start, box.shape), x.alphabet)


# ---------------------------------------------------------------------------
# dyadic distances


@dataclass(frozen=True)
class Bound:
    """Closed interval certain to contain the true value; lo == hi when exact."""

    lo: float
    hi: float

    @property
    def exact(self) -> bool:
        return self.lo == self.hi

    def gt(self, t: float):
        """Tri-state 'value > t': True / False / None (undecided)."""
        if self.lo > t:
            return True
        if self.hi <= t:
            return False
        return None


def depth_for_epsilon(eps: float) -> int:
    """Band index r with 2^-(r+1) <= eps < 2^-r.  Requires 0 < eps < 1."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must be in (0, 1)")
    r = 0
    while 2.0 ** -(r + 1) > eps:
        r += 1
    return r


def _cell_radius(coords, mode: LatticeMode) -> int:
    if mode is LatticeMode.FULL:
        return max(abs(int(c)) for c in coords)
    return max(int(c) for c in coords)


def point_distance(x: Configuration, y: Configuration, max_depth: int) -> Bound:
    """d(x, y) resolved up to max_depth: exact 2^-rho, or [0, 2^-(max_depth+1)]."""
    if x.dim != y.dim or x.mode is not y.mode:
        raise ValueError("configurations live on different lattices")
    box = make_box(x.dim, x.mode, max_depth)
    wx = x.window(box.min_corner, box.shape)
    wy = y.window(box.min_corner, box.shape)
    diff = np.argwhere(wx != wy)
    if diff.shape[0] == 0:
        return Bound(0.0, 2.0 ** -(max_depth + 1))
    lo_corner = box.min_corner
    rho = min(_cell_radius([c + lo_corner[a] for a, c in enumerate(row)], x.mode) for row in diff)
    d = 2.0**-rho
    return Bound(d, d)


def orbit_distance(x: Configuration, y: Configuration, window, max_depth: int) -> Bound:
    """max over i in window of d(shift(x, i), shift(y, i)).  Empty window gives 0."""
    cells = list(window.cells()) if isinstance(window, LatticeBox) else [tuple(v) for v in window]
    if not cells:
        return Bound(0.0, 0.0)
    if x.dim != y.dim or x.mode is not y.mode:
        raise ValueError("configurations live on different lattices")
    dim, mode = x.dim, x.mode
    dlo = mode.low(max_depth)
    dw = mode.width(max_depth)
    hull_min = tuple(min(c[a] for c in cells) + dlo for a in range(dim))
    hull_max = tuple(max(c[a] for c in cells) + dlo + dw - 1 for a in range(dim))
    shape = tuple(b - a + 1 for a, b in zip(hull_min, hull_max))
    diff = np.argwhere(x.window(hull_min, shape) != y.window(hull_min, shape))
    diff_abs = diff + np.array(hull_min) if diff.shape[0] else diff
    lo = 0.0
    hi = 2.0 ** -(max_depth + 1)
    for i in cells:
        best = None
        for row in diff_abs:
            rel = [int(row[a]) - i[a] for a in range(dim)]
            if all(dlo <= r <= dlo + dw - 1 for r in rel):
                rho = _cell_radius(rel, mode)
                if best is None or rho < best:
                    best = rho
                    if best == 0:
                        break
        if best is not None:
            d = 2.0**-best
            if d > lo:
                lo = d
                if lo >= 1.0:
                    return Bound(1.0, 1.0)
    hi = max(lo, hi)
    return Bound(lo, hi)


class SymbolicMetric:
    """Dyadic metric bundle with a fixed resolution depth."""

    def __init__(self, max_depth: int = 8):
        if max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        self.max_depth = max_depth

    def point(self, x, y) -> Bound:
        return point_distance(x, y, self.max_depth)

    def orbit(self, x, y, window) -> Bound:
        return orbit_distance(x, y, window, self.max_depth)


# ---------------------------------------------------------------------------
# block-set files


def write_blockset(path, blocks: list[Pattern]) -> None:
    """Write `<dim> <mode> <M> <b> <count>` then one V_M-symbol row per block.

    Rows are emitted in lexicographic symbol order so equal sets always
    produce byte-identical files.
    """
    if not blocks:
        raise ValueError("refusing to write an empty block set")
    box = blocks[0].box
    alphabet = blocks[0].alphabet
    for p in blocks:
        if p.box != box or p.alphabet != alphabet:
            raise ValueError("blocks disagree on box or alphabet")
    rows = sorted(p.as_tuple() for p in blocks)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{box.dim} {box.mode.value} {box.radius} {alphabet.size} {len(rows)}\n")
        for row in rows:
            fh.write(" ".join(str(s) for s in row) + "\n")


def read_blockset(path) -> tuple[Alphabet, LatticeBox, list[Pattern]]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ValueError("malformed block-set header (want: dim mode M b count)")
        try:
            dim, M, b, count = int(header[0]), int(header[2]), int(header[3]), int(header[4])
            mode = LatticeMode.parse(header[1])
        except ValueError as exc:
            raise ValueError(f"malformed block-set header: {exc}") from exc
        if dim < 1 or M < 0 or b < 2 or count < 1:
            raise ValueError("malformed block-set header: values out of range")
        box = make_box(dim, mode, M)
        alphabet = Alphabet(b)
        blocks = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = [int(tok) for tok in line.split()]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-integer symbol") from exc
            if len(row) != box.volume:
                raise ValueError(f"line {lineno}: expected {box.volume} symbols, got {len(row)}")
            if any(not 0 <= s < b for s in row):
                raise ValueError(f"line {lineno}: symbol out of range")
            blocks.append(Pattern(box, row, alphabet))
    if len(blocks) != count:
        raise ValueError(f"header promises {count} blocks, file has {len(blocks)}")
    return alphabet, box, blocks
