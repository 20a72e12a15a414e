"""Shared helpers: exact decimal reading of parameters, keyed deterministic PRNG."""

from __future__ import annotations

from fractions import Fraction

_MASK = (1 << 64) - 1


def exact_fraction(x) -> Fraction:
    """Read a numeric parameter as an exact decimal.

    Floats are interpreted through their shortest decimal repr, so 0.1 means
    1/10, not the binary double nearest to it.  Threshold comparisons in the
    parameter chain (K*eta > 2d and friends) are exact under this reading;
    under binary semantics they flip on representation noise.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot read {type(x).__name__} as an exact number")


def _mix(z: int) -> int:
    # splitmix64 finalizer
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _zigzag(v: int) -> int:
    return (v << 1) ^ (v >> 63) if v >= 0 else ((-v) << 1) - 1


def keyed_hash(seed: int, *words: int) -> int:
    """Stateless 64-bit hash of (seed, words).

    Counter-based, so draws indexed by (seed, counter...) are reproducible
    and order-independent; nothing here depends on interpreter hash seeds.
    """
    h = _mix(seed & _MASK)
    for w in words:
        h = _mix(h ^ (_zigzag(int(w)) & _MASK))
    return h


def keyed_uniform(seed: int, *words: int) -> float:
    """Deterministic uniform in [0, 1) keyed by (seed, words)."""
    return keyed_hash(seed, *words) / 2.0**64


def keyed_choice(seed: int, count: int, *words: int) -> int:
    """Deterministic index in range(count) keyed by (seed, words)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return keyed_hash(seed, *words) % count
