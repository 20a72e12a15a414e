import math
from fractions import Fraction

import pytest

from zde.counting import binary_entropy, log_q_count, q_count
from zde.lattice import LatticeMode

F, P = LatticeMode.FULL, LatticeMode.POSITIVE


def test_q_count_frozen_examples():
    # V = 2, delta just under 1/2: both cells still required
    cb = q_count(1, "0.49", 1, P)
    assert (cb.volume, cb.threshold, cb.exact) == (2, 2, 1)

    # V = 3, delta = 1/3: subsets of size >= 2
    cb = q_count(2, Fraction(1, 3), 1, P)
    assert cb.exact == 4

    # tiny delta: only the full window qualifies
    cb = q_count(8, "0.000000001", 1, P)
    assert cb.exact == 1 and cb.threshold == 9

    # threshold landing exactly on an integer stays inclusive
    cb = q_count(3, "0.25", 1, P)
    assert cb.threshold == 3 and cb.exact == 5

    # Pascal row check: V = 4, delta = 1/2 -> C(4,2)+C(4,3)+C(4,4)
    cb = q_count(3, "0.5", 1, P)
    assert cb.exact == 11


def test_q_count_two_dimensional():
    # V = 9 on the 2-d one-sided box of radius 2
    cb = q_count(2, "0.2", 2, P)
    assert cb.volume == 9 and cb.threshold == 8
    assert cb.exact == math.comb(9, 8) + math.comb(9, 9)


def test_exact_vs_log_domain():
    for n in range(1, 64):
        for num in range(1, 10):
            delta = Fraction(num, 20)
            cb = q_count(n, delta, 1, P)
            assert cb.exact is not None
            assert abs(cb.log_value - log_q_count(n, delta, 1, P)) <= 1e-9


def test_entropy_bound_holds():
    # ln Q / V <= H(delta) for delta <= 1/2 (complement subsets have size <= delta V)
    for n in range(1, 64):
        for num in range(1, 11):
            delta = Fraction(num, 20)
            cb = q_count(n, delta, 1, P)
            assert cb.log_value / cb.volume <= cb.bound + 1e-12


def test_binary_entropy_values():
    assert abs(binary_entropy("0.5") - math.log(2)) < 1e-15
    for num in range(1, 10):
        d = Fraction(num, 10)
        assert abs(binary_entropy(d) - binary_entropy(1 - d)) < 1e-12
    assert binary_entropy("0.1") < binary_entropy("0.3") < binary_entropy("0.5")
    with pytest.raises(ValueError):
        binary_entropy(0)
    with pytest.raises(ValueError):
        binary_entropy(1)


def test_delta_read_as_exact_decimal():
    # 0.3 as a decimal: threshold of V=10 is ceil(7.0) = 7, not 8
    cb = q_count(9, "0.3", 1, P)
    assert cb.threshold == 7
    # the binary float 0.3 is slightly above 3/10; exact reading must not
    # let (1-delta)*V creep below the integer and change the ceiling
    cb2 = q_count(9, 0.3, 1, P)
    assert cb2.threshold == 7


def test_q_count_full_mode_volume():
    cb = q_count(1, "0.5", 1, F)
    # V = 3, threshold 2
    assert cb.volume == 3 and cb.exact == 4


def test_q_count_input_validation():
    with pytest.raises(ValueError):
        q_count(1, 0, 1, P)
    with pytest.raises(ValueError):
        q_count(1, 1, 1, P)


def test_log_domain_large_volume():
    # beyond the exact limit the log-domain path must still be finite and
    # own the same normalized bound
    cb = q_count(80, "0.25", 2, P)
    assert cb.exact is None
    assert 0 < cb.log_value / cb.volume <= cb.bound + 1e-12
