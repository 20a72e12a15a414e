import itertools
import math
from fractions import Fraction

import pytest

from zde._util import keyed_hash
from zde.lattice import LatticeMode, make_box
from zde.measures import (
    IN,
    OUT,
    UNDECIDED,
    CylinderMeasure,
    bernoulli,
    bernoulli_entropy,
    dirac,
    empirical_measure,
    measure_in_ball,
    metric_D,
    mixture,
    pattern_empirical,
    read_measure,
    var_bound,
    write_measure,
)
from zde.symbolic import Alphabet, ConstantConfiguration, Pattern, periodic

F, P = LatticeMode.FULL, LatticeMode.POSITIVE
A2 = Alphabet(2)


def family_distance_oracle(mu, nu, depth):
    """Straight re-enumeration of the separating family, no shared code paths.

    Index of depth-t pattern = (number of patterns at depths < t) + base-b
    rank + 1; term weight 2^-index.
    """
    b = mu.alphabet.size
    total = Fraction(0)
    start = 0
    for t in range(depth + 1):
        V = make_box(mu.dim, mu.mode, t).volume
        pm, pn = mu.prob_table(t), nu.prob_table(t)
        for rank, pat in enumerate(itertools.product(range(b), repeat=V)):
            i = start + rank + 1
            total += Fraction(1, 2**i) * abs(
                Fraction(pm.get(pat, 0)) - Fraction(pn.get(pat, 0))
            )
        start += b**V
    return total, Fraction(1, 2**start)


def test_dirac_pair_frozen_value():
    x0 = ConstantConfiguration(0, 1, P, A2)
    x1 = ConstantConfiguration(1, 1, P, A2)
    d = metric_D(dirac(x0, 1), dirac(x1, 1), 1)
    assert d.value_exact == Fraction(57, 64)
    assert float(d.value_exact) == 0.890625
    assert d.tail_exact == Fraction(1, 64)
    oracle, tail = family_distance_oracle(dirac(x0, 1), dirac(x1, 1), 1)
    assert oracle == d.value_exact and tail == d.tail_exact


def test_metric_agrees_with_oracle_on_random_pairs():
    for trial in range(25):
        mus = []
        for j in (0, 1):
            weights = [1 + keyed_hash(trial, j, i) % 13 for i in range(4)]
            tot = sum(weights)
            freqs = {
                (i // 2, i % 2): Fraction(w, tot) for i, w in enumerate(weights)
            }
            mus.append(CylinderMeasure(A2, 1, P, 1, freqs))
        d = metric_D(mus[0], mus[1], 1)
        oracle, tail = family_distance_oracle(mus[0], mus[1], 1)
        assert d.value_exact == oracle
        assert d.tail_exact == tail


def test_metric_symmetry_and_identity():
    mu = bernoulli(["0.3", "0.7"], 1, 1, P)
    nu = bernoulli(["0.5", "0.5"], 1, 1, P)
    assert metric_D(mu, nu, 1).value_exact == metric_D(nu, mu, 1).value_exact
    assert metric_D(mu, mu, 1).value_exact == 0


def test_convexity_battery():
    # D(a m1 + (1-a) m2, a n1 + (1-a) n2) <= a D(m1,n1) + (1-a) D(m2,n2)
    violations = 0
    for trial in range(200):
        ms = []
        for j in range(4):
            weights = [1 + keyed_hash(7, trial, j, i) % 97 for i in range(4)]
            tot = sum(weights)
            freqs = {(i // 2, i % 2): Fraction(w, tot) for i, w in enumerate(weights)}
            ms.append(CylinderMeasure(A2, 1, P, 1, freqs))
        a = Fraction(1 + keyed_hash(7, trial, 9) % 9, 10)
        left = metric_D(mixture([(a, ms[0]), (1 - a, ms[1])]),
                        mixture([(a, ms[2]), (1 - a, ms[3])]), 1)
        d1 = metric_D(ms[0], ms[2], 1)
        d2 = metric_D(ms[1], ms[3], 1)
        bound = a * d1.value_exact + (1 - a) * d2.value_exact
        slack = left.tail_exact + d1.tail_exact + d2.tail_exact
        if left.value_exact > bound + slack:
            violations += 1
    assert violations == 0


def test_var_bound_frozen_values():
    assert var_bound(0.5, A2, 1, P) == 0.25  # band 0: first 2 indicators agree
    assert var_bound(0.25, A2, 1, P) == 2.0**-6  # band 1: first 6 agree
    assert var_bound(1.0, A2, 1, P) == 1.0
    assert var_bound(2.0, A2, 1, P) == 1.0
    with pytest.raises(ValueError):
        var_bound(0.0, A2, 1, P)


def test_var_bound_dominates_dirac_displacement():
    # two points at distance exactly 2^-1 (differ first at cell radius 1)
    x = periodic(Pattern(make_box(1, P, 1), [0, 1], A2))
    y = periodic(Pattern(make_box(1, P, 1), [0, 0], A2))
    d = metric_D(dirac(x, 1), dirac(y, 1), 1)
    assert float(d.hi) <= var_bound(0.5, A2, 1, P)


def test_empirical_measure_alternating_word():
    x = periodic(Pattern(make_box(1, P, 1), [0, 1], A2))
    mu = empirical_measure(x, make_box(1, P, 3), 1)
    assert mu.freqs == {(0, 1): Fraction(1, 2), (1, 0): Fraction(1, 2)}
    assert mu.prob_table(0) == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}
    assert mu.exact


def test_pattern_empirical_inside_anchors():
    # anchors are the V_{M-depth} sites whose window stays inside the block
    p = Pattern(make_box(1, P, 3), [0, 1, 0, 1], A2)
    mu = pattern_empirical(p, 1)
    assert mu.freqs == {(0, 1): Fraction(2, 3), (1, 0): Fraction(1, 3)}
    assert pattern_empirical(p, 0).freqs == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}
    with pytest.raises(ValueError):
        pattern_empirical(p, 4)


def test_empirical_uniformly_random_block_near_uniform():
    mu0 = bernoulli(["0.5", "0.5"], 1, 1, P)
    x = periodic(
        Pattern(make_box(1, P, 15), [keyed_hash(3, i) % 2 for i in range(16)], A2)
    )
    mu = empirical_measure(x, make_box(1, P, 15), 1)
    d = metric_D(mu, mu0, 1)
    # far below the diameter of the space (the point-mass pair sits at 0.89)
    assert d.value_exact == Fraction(57, 256)
    assert d.value < 0.3


def test_mixture_validation_and_marginals():
    mu = bernoulli(["0.25", "0.75"], 1, 1, P)
    nu = bernoulli(["0.75", "0.25"], 1, 1, P)
    mix = mixture([(Fraction(1, 2), mu), (Fraction(1, 2), nu)])
    assert mix.prob_table(0) == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}
    assert mix.marginal_consistent()
    with pytest.raises(ValueError):
        mixture([(Fraction(1, 3), mu), (Fraction(1, 3), nu)])


def test_prob_table_depths():
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    t3 = mu.prob_table(3)  # product extension above the stored depth
    assert len(t3) == 16 and sum(t3.values()) == 1
    freqs = {(0, 0): Fraction(1, 2), (1, 1): Fraction(1, 2)}
    nu = CylinderMeasure(A2, 1, P, 1, freqs)
    assert nu.prob_table(0) == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}
    with pytest.raises(ValueError):
        nu.prob_table(2)  # no product structure: deeper tables unavailable


def test_measure_in_ball_tristate():
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    nu = bernoulli(["0.6", "0.4"], 1, 1, P)
    d = metric_D(mu, nu, 1)
    v, t = d.value_exact, d.tail_exact
    assert measure_in_ball(mu, nu, v + t, 1) == IN
    assert measure_in_ball(mu, nu, v - t, 1) == OUT
    assert measure_in_ball(mu, nu, v + t / 2, 1) == UNDECIDED
    assert measure_in_ball(mu, mu, 0, 1) == UNDECIDED  # tail keeps zero open


def test_bernoulli_validation_and_entropy():
    with pytest.raises(ValueError):
        bernoulli(["0.5", "0.4"], 1, 1, P)
    assert abs(bernoulli_entropy(["0.5", "0.5"]) - math.log(2)) < 1e-15
    assert bernoulli_entropy(["1", "0"]) == 0.0


def test_measure_dump_roundtrip(tmp_path):
    mu = bernoulli(["0.25", "0.75"], 1, 1, P)
    path = tmp_path / "m.meas"
    write_measure(path, mu)
    text = path.read_text()
    assert text.splitlines()[0] == "1"
    assert "00 1/16" in text  # digits run together for b <= 10
    back = read_measure(path, A2, 1, P)
    assert back.depth == 1
    assert back.freqs == mu.freqs
    # second write is byte-identical
    path2 = tmp_path / "m2.meas"
    write_measure(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_measure_dump_errors(tmp_path):
    path = tmp_path / "bad.meas"
    path.write_text("x\n")
    with pytest.raises(ValueError, match="header"):
        read_measure(path, A2, 1, P)
    path.write_text("1\n00 1/2\n00 1/2\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_measure(path, A2, 1, P)
    path.write_text("1\n0 1\n")
    with pytest.raises(ValueError, match="expected 2 symbols"):
        read_measure(path, A2, 1, P)
    path.write_text("1\n07 1\n")
    with pytest.raises(ValueError, match="symbol out of range"):
        read_measure(path, A2, 1, P)
    path.write_text("1\n00 nope\n")
    with pytest.raises(ValueError, match="bad frequency"):
        read_measure(path, A2, 1, P)
    # frequencies must sum to 1 through the measure constructor
    path.write_text("1\n00 1/2\n")
    with pytest.raises(ValueError, match="sum to"):
        read_measure(path, A2, 1, P)


def test_measure_dump_single_cell_depth_zero(tmp_path):
    # depth 0 on the full lattice: V = 1, space-separated row still parses
    mu = CylinderMeasure(A2, 1, F, 0, {(0,): Fraction(1, 3), (1,): Fraction(2, 3)})
    path = tmp_path / "d0.meas"
    write_measure(path, mu)
    back = read_measure(path, A2, 1, F)
    assert back.freqs == mu.freqs


def test_large_alphabet_dump_space_separated(tmp_path):
    al = Alphabet(12)
    freqs = {(0, 11): Fraction(1, 2), (11, 0): Fraction(1, 2)}
    mu = CylinderMeasure(al, 1, P, 1, freqs)
    path = tmp_path / "w.meas"
    write_measure(path, mu)
    assert "0 11 1/2" in path.read_text()
    back = read_measure(path, al, 1, P)
    assert back.freqs == freqs
