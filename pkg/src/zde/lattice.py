"""Boxes, box composition, and box decompositions on Z^d / Z_+^d.

Everything downstream speaks in terms of the cube-shaped windows
``Lambda_n``: ``[-n, n]^d`` on the full lattice, ``[0, n]^d`` on the
one-sided lattice.  Side length D_n and cell count V_n = D_n^d are the
two numbers the entropy normalizations care about.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from fractions import Fraction


class LatticeMode(enum.Enum):
    """FULL = boxes centered at 0 on Z^d; POSITIVE = corner boxes on Z_+^d."""

    FULL = "F"
    POSITIVE = "P"

    @classmethod
    def parse(cls, token: str) -> "LatticeMode":
        token = token.strip().upper()
        for m in cls:
            if token in (m.value, m.name):
                return m
        raise ValueError(f"unknown lattice mode {token!r} (use F or P)")

    def width(self, n: int) -> int:
        return 2 * n + 1 if self is LatticeMode.FULL else n + 1

    def low(self, n: int) -> int:
        # minimal coordinate of Lambda_n along each axis
        return -n if self is LatticeMode.FULL else 0


@dataclass(frozen=True)
class LatticeBox:
    """The box Lambda_radius in the given dimension and mode."""

    dim: int
    mode: LatticeMode
    radius: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    @property
    def width(self) -> int:
        return self.mode.width(self.radius)

    @property
    def volume(self) -> int:
        return self.width**self.dim

    @property
    def min_corner(self) -> tuple[int, ...]:
        return (self.mode.low(self.radius),) * self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.width,) * self.dim

    def cells(self):
        """Iterate cells in canonical order (lexicographic, C order)."""
        lo = self.mode.low(self.radius)
        rng = range(lo, lo + self.width)
        return itertools.product(rng, repeat=self.dim)

    def contains(self, v: tuple[int, ...]) -> bool:
        lo = self.mode.low(self.radius)
        return len(v) == self.dim and all(lo <= c < lo + self.width for c in v)


def make_box(dim: int, mode: LatticeMode, radius: int) -> LatticeBox:
    return LatticeBox(dim, mode, radius)


def compose(m: int, n: int, mode: LatticeMode) -> int:
    """Radius of the composed box: D_{compose(m,n)} = D_m * D_n.

    One-sided: mn + m + n.  Two-sided: 2mn + m + n.  In both cases the
    big box splits into V_m disjoint translates of Lambda_n, so volumes
    multiply: V_{compose(m,n)} = V_m * V_n.
    """
    if m < 0 or n < 0:
        raise ValueError("radii must be >= 0")
    if mode is LatticeMode.POSITIVE:
        return m * n + m + n
    return 2 * m * n + m + n


@dataclass(frozen=True)
class Decomposition:
    """Packing of Lambda_target by disjoint translates of Lambda_sub.

    q+1 translates fit along each axis; ``subcube_origins`` lists the
    translation vectors in lexicographic index order.  The translate at
    origin o occupies o + Lambda_sub.
    """

    dim: int
    mode: LatticeMode
    target_radius: int
    sub_radius: int
    q: int
    subcube_origins: tuple[tuple[int, ...], ...]

    @property
    def covered_volume(self) -> int:
        per_axis = (self.q + 1) * self.mode.width(self.sub_radius)
        return per_axis**self.dim

    @property
    def remainder_volume(self) -> int:
        return make_box(self.dim, self.mode, self.target_radius).volume - self.covered_volume

    @property
    def remainder_fraction(self) -> Fraction:
        return Fraction(
            self.remainder_volume, make_box(self.dim, self.mode, self.target_radius).volume
        )


def decompose_generic(N: int, n: int, dim: int, mode: LatticeMode) -> Decomposition:
    """Pack Lambda_n with translates of Lambda_N, anchored at the minimal corner.

    q = floor(D_n / D_N) - 1, and the uncovered remainder has density at
    most dim * D_N / D_n.  Anchoring at the corner (rather than centering)
    is what makes that bound hold uniformly in both modes: the covered
    stretch per axis is (q+1) D_N > D_n - D_N.
    """
    if N < 1:
        raise ValueError("sub radius must be >= 1")
    if n < N:
        raise ValueError("target radius must be >= sub radius")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    DN = mode.width(N)
    Dn = mode.width(n)
    q = Dn // DN - 1
    # one-sided boxes start at 0; full boxes start at -n, and a translate of
    # Lambda_N placed against that corner has origin -n + N
    base = 0 if mode is LatticeMode.POSITIVE else -n + N
    axis_origins = [base + j * DN for j in range(q + 1)]
    origins = tuple(itertools.product(axis_origins, repeat=dim))
    return Decomposition(dim, mode, n, N, q, origins)


def decompose(K: int, M: int, dim: int, mode: LatticeMode) -> Decomposition:
    """K-fold decomposition: pack Lambda_{K*M} with translates of Lambda_M.

    Remainder density is strictly below 2*dim/K.
    """
    if K < 1 or M < 1:
        raise ValueError("K and M must be >= 1")
    return decompose_generic(M, K * M, dim, mode)
