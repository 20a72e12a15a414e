import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from zde.construction import (
    DESK,
    STRICT,
    SFT,
    BlockSubshift,
    InfeasibleParameters,
    SamplingBudgetExhausted,
    _offset_pattern_count,
    build_delta,
    choose_params,
    delta_point,
    disjointness_experiment,
    membership_Z,
    proximity_check,
    random_delta_point,
    read_sidecar,
    sample_block_set,
    separated_pair_check,
    trace_targets,
    verify_sandwich,
    write_sidecar,
)
from zde.lattice import LatticeMode, compose, make_box
from zde.measures import CylinderMeasure, bernoulli, bernoulli_entropy, dirac
from zde.separation import FullShift
from zde.symbolic import (
    Alphabet,
    BlockTilingConfiguration,
    ConstantConfiguration,
    Pattern,
    SeededRule,
    pattern_at,
    shift,
)

P = LatticeMode.POSITIVE
F = LatticeMode.FULL
A2 = Alphabet(2)
A4 = Alphabet(4)
LN4 = bernoulli_entropy(["0.25"] * 4)

UNIFORM4 = bernoulli(["0.25"] * 4, 1, 1, P)


def strict_params():
    return choose_params("0.5", "0.2", "0.4", LN4, 4, 1, P)


def desk_params(m_cap=9):
    return choose_params("0.5", "0.2", "0.4", LN4, 4, 1, P, mode_flag=DESK, m_cap=m_cap)


def desk_subshift(seed=7):
    p = desk_params()
    blocks = sample_block_set(UNIFORM4, p.M, p.eta, p.size_lo, p.size_hi, seed)
    return build_delta(blocks, p, "uniform"), p


# ---------------------------------------------------------------------------
# parameter chain


def test_strict_chain_frozen_values():
    p = strict_params()
    assert p.beta == Fraction(1, 100)
    assert p.h1 == Fraction(3, 5)
    assert p.eta == Fraction(1, 10)
    assert p.K == 21
    assert p.epsilon == Fraction(1, 8)
    assert p.r_eps == 256
    assert p.M == 647
    assert p.size_lo is not None and not p.feasible_enumeration
    assert p.waived == ()
    assert all(p.strict_checks.values())


def test_exact_decimal_reading_controls_K():
    # eta = 0.4/4 = 1/10 exactly; 20 * 1/10 = 2 is NOT > 2, so K = 21.
    # taking the bits of the float 0.1 instead would give 20*eta > 2, K = 20.
    p = strict_params()
    assert p.K == 21
    assert 20 * p.eta == 2
    assert 20 * Fraction(0.1) > 2  # the trap the decimal reading avoids


def test_strict_M_minimality():
    p = strict_params()
    V = p.M + 1
    assert math.log(V) / V < float(p.beta)
    V_prev = p.M  # volume at radius M-1
    assert math.log(V_prev) / V_prev >= float(p.beta)


def test_strict_delta_chain():
    p = strict_params()
    from zde.counting import binary_entropy

    assert binary_entropy(p.delta) < float(p.beta)
    assert p.delta < min(0.25, 1 / (2 * p.K), float(p.beta) / math.log(p.r_eps))
    # Q(M, delta) = 1 at the desk block size: the window must be fully used
    from zde.counting import q_count

    assert q_count(9, p.delta, 1, P).exact == 1


def test_desk_chain_waives_volume_check():
    p = desk_params()
    assert p.M == 9
    assert (p.size_lo, p.size_hi) == (404, 446)
    assert p.feasible_enumeration
    assert p.waived == ("log_volume_ratio_below_beta",)
    # everything else still passes at the desk size
    assert p.strict_checks["size_window_nonempty"]
    assert p.strict_checks["m_above_trace_scale"]


def test_choose_params_infeasible_inputs():
    with pytest.raises(InfeasibleParameters):
        choose_params("1.5", "0.2", "0.4", LN4, 4)  # h0 above the entropy
    with pytest.raises(InfeasibleParameters):
        choose_params("0", "0.2", "0.4", LN4, 4)
    with pytest.raises(InfeasibleParameters):
        choose_params("0.5", "0.2", "0.4", 2.0, 4)  # entropy above ln 4
    with pytest.raises(InfeasibleParameters):
        choose_params("0.5", "0.2", "0.4", LN4, 4, mode_flag=DESK)  # no m_cap
    with pytest.raises(ValueError):
        choose_params("0.5", "0.2", "0.4", LN4, 4, mode_flag="RELAXED")


def test_beta_tracks_the_tightest_budget():
    # here h0 = 0.05 is the binding constraint, not beta0
    p = choose_params("0.05", "0.2", "0.4", LN4, 4, mode_flag=DESK, m_cap=59)
    assert p.beta == Fraction(1, 20) / 20


# ---------------------------------------------------------------------------
# block sampling


def test_sample_block_set_balanced_words():
    # b=2, V_M=4, eta=0.3, depth 0: exactly the 6 balanced words certify
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    blocks = sample_block_set(mu, 3, "0.3", 6, 7, seed=1, depth=0)
    assert len(blocks) == 6
    assert sorted(p.as_tuple() for p in blocks) == [
        (0, 0, 1, 1), (0, 1, 0, 1), (0, 1, 1, 0),
        (1, 0, 0, 1), (1, 0, 1, 0), (1, 1, 0, 0),
    ]


def test_sample_block_set_deterministic():
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    a = sample_block_set(mu, 3, "0.3", 4, 7, seed=5, depth=0)
    b = sample_block_set(mu, 3, "0.3", 4, 7, seed=5, depth=0)
    assert [p.as_tuple() for p in a] == [p.as_tuple() for p in b]
    c = sample_block_set(mu, 3, "0.3", 4, 7, seed=6, depth=0)
    assert len(c) == 4  # same contract, possibly different draws


def test_sample_block_set_budget_exhaustion():
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    with pytest.raises(SamplingBudgetExhausted) as exc:
        sample_block_set(mu, 3, "0.01", 1, 7, seed=1, depth=0, budget=500)
    assert exc.value.found == 0 and exc.value.needed == 1 and exc.value.draws == 500


def test_sample_block_set_window_validation():
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    with pytest.raises(ValueError):
        sample_block_set(mu, 1, "0.3", 5, 5, seed=0)  # 5 > 2^2 patterns
    with pytest.raises(ValueError):
        sample_block_set(mu, 1, "0.3", 3, 2, seed=0)


def test_desk_pipeline_frozen_counts():
    sub, p = desk_subshift()
    assert sub.count == 404
    assert math.isclose(sub.h_exact, math.log(404) / 10, rel_tol=0, abs_tol=1e-15)
    assert 0.5 < sub.h_exact < 0.7


# ---------------------------------------------------------------------------
# the tiling family


def test_build_delta_validation():
    box = make_box(1, P, 1)
    blocks = [Pattern(box, [0, 1], A2), Pattern(box, [0, 1], A2)]
    with pytest.raises(ValueError, match="distinct"):
        build_delta(blocks)
    with pytest.raises(ValueError):
        build_delta([])


def test_random_delta_point_deterministic_and_in_family():
    sub, _ = desk_subshift()
    z1 = random_delta_point(sub, 3)
    z2 = random_delta_point(sub, 3)
    assert isinstance(z1, BlockTilingConfiguration)
    assert z1.offset == z2.offset
    assert z1.window((0,), (40,)).tolist() == z2.window((0,), (40,)).tolist()
    # every aligned window is one of the blocks
    box = sub.box
    D = box.width
    aligned = shift(z1, tuple(D - o for o in z1.offset)) if any(z1.offset) else z1
    keys = {p.key() for p in sub.blocks}
    for i in range(3):
        w = pattern_at(aligned, box, (i * D,))
        assert w.key() in keys


def test_offset_closure_and_shift_compat_battery():
    # criterion 9 shape: 100 random (rule, offset, basis vector) triples, d <= 2
    for trial in range(100):
        dim = 1 + trial % 2
        mode = P if trial % 3 else F
        M = 1 + (trial // 2) % 2
        count = 2 + trial % 3
        box = make_box(dim, mode, M)
        rng = np.random.default_rng(trial)
        blocks = rng.integers(0, 2, size=(count,) + box.shape).astype(np.int64)
        lo = mode.low(M)
        offset = tuple(lo + int(rng.integers(0, box.width)) for _ in range(dim))
        cfg = BlockTilingConfiguration(blocks, M, SeededRule(trial, count), offset, mode, A2)
        axis = trial % dim
        v = tuple(1 if a == axis else 0 for a in range(dim))
        moved = shift(cfg, v)
        # closure: still a tiling with an offset inside the block box
        assert isinstance(moved, BlockTilingConfiguration)
        assert all(lo <= c <= lo + box.width - 1 for c in moved.offset)
        # compatibility: windows agree exactly
        origin = tuple(mode.low(2) for _ in range(dim))
        shape = (mode.width(2),) * dim
        lhs = cfg.window(tuple(o + s for o, s in zip(origin, v)), shape)
        assert lhs.tolist() == moved.window(origin, shape).tolist()


# ---------------------------------------------------------------------------
# sandwich


def subshift_of_count(count, M=9, b=4):
    alphabet = Alphabet(b)
    box = make_box(1, P, M)
    blocks = []
    for i in range(count):
        digits = []
        x = i
        for _ in range(box.volume):
            digits.append(x % b)
            x //= b
        blocks.append(Pattern(box, digits, alphabet))
    return build_delta(blocks)


def test_sandwich_worked_example_200_blocks():
    sub = subshift_of_count(200)
    rep = verify_sandwich(sub, "0.5", "0.2", 3)
    assert rep.passed
    assert math.isclose(rep.h_exact, math.log(200) / 10, abs_tol=1e-15)
    # lower rows equal h_exact exactly at every n (grid assignments)
    for n, radius, count, est in rep.lower_rows:
        assert radius == compose(n, 9, P)
        assert count == 200 ** make_box(1, P, n).volume
        assert math.isclose(est, rep.h_exact, abs_tol=1e-12)
    # exact union counts respect the offset bound and trend down toward h
    V_M = 10
    for n, radius, union, bound, est in rep.exact_rows:
        assert union <= bound == V_M * 200 ** make_box(1, P, n + 1).volume
        assert est >= rep.h_exact - 1e-12
    assert "no parameter metadata" in " ".join(rep.notes)


def test_sandwich_fails_outside_the_window():
    sub = subshift_of_count(1)
    rep = verify_sandwich(sub, "0.5", "0.2", 2)
    assert not rep.passed and rep.h_exact == 0.0
    big = subshift_of_count(4000)  # ln(4000)/10 = 0.829 > 0.7
    rep2 = verify_sandwich(big, "0.5", "0.2", 2)
    assert not rep2.passed


def test_sandwich_rejects_short_trend():
    sub = subshift_of_count(200)
    with pytest.raises(ValueError):
        verify_sandwich(sub, "0.5", "0.2", 1)


def brute_offset_count(blocks, M, mode, window, offset, dim):
    """Enumerate all rule assignments over the covered grid cells."""
    D = mode.width(M)
    lo = mode.low(M)
    count = len(blocks)

    cells = list(window.cells())
    grid_cells = sorted(
        {tuple((c + offset[a] - lo) // D for a, c in enumerate(cell)) for cell in cells}
    )
    seen = set()
    for assign in itertools.product(range(count), repeat=len(grid_cells)):
        mapping = dict(zip(grid_cells, assign))
        out = []
        for cell in cells:
            grid = tuple((c + offset[a] - lo) // D for a, c in enumerate(cell))
            local = tuple(
                c + offset[a] - lo - g * D for a, (c, g) in enumerate(zip(cell, grid))
            )
            out.append(int(blocks[mapping[grid]][local]))
        seen.add(tuple(out))
    return len(seen)


def test_offset_pattern_count_matches_bruteforce():
    rng = np.random.default_rng(2)
    for dim in (1, 2):
        for count in (2, 3):
            M = 1
            mode = P
            box = make_box(dim, mode, M)
            blocks = rng.integers(0, 2, size=(count,) + box.shape).astype(np.int64)
            window = make_box(dim, mode, 2)
            for offset in box.cells():
                fast = _offset_pattern_count(blocks, box.width, mode.low(M), window, offset)
                slow = brute_offset_count(blocks, M, mode, window, offset, dim)
                assert fast == slow


# ---------------------------------------------------------------------------
# separation, tracing, membership


def test_separated_pair_check():
    sub, _ = desk_subshift()
    rep = separated_pair_check(sub, 2, samples=50, seed=0)
    assert rep.passed and rep.failures == ()
    single = subshift_of_count(1)
    with pytest.raises(ValueError):
        separated_pair_check(single, 1)


def test_trace_full_shift_two_targets():
    box = make_box(1, P, 2)
    t1 = Pattern(box, [0, 1, 0], A2)
    t2 = Pattern(box, [1, 1, 0], A2)
    res = trace_targets({(0,): t1, (1,): t2}, 2, FullShift(A2, 1, P))
    assert res.ok
    assert res.configuration.window((0,), (6,)).tolist() == [0, 1, 0, 1, 1, 0]
    assert all(m == 0 for _, _, m, _ in res.rows)


def test_trace_single_target_full_shift():
    box = make_box(1, P, 3)
    t = Pattern(box, [1, 0, 0, 1], A2)
    res = trace_targets({(2,): t}, 3, FullShift(A2, 1, P))
    assert res.ok
    got = pattern_at(res.configuration, box, (2 * box.width,))
    assert got.as_tuple() == (1, 0, 0, 1)


def test_trace_sft_forbidden_word():
    box1 = make_box(1, P, 1)
    sft = SFT(A2, 1, P, (Pattern(box1, [1, 1], A2),))
    bad = trace_targets({(0,): Pattern(box1, [1, 1], A2)}, 1, sft)
    assert not bad.ok
    assert "finite-scale certificate" in bad.certificate
    assert bad.searched > 0
    good = trace_targets(
        {(0,): Pattern(box1, [0, 1], A2), (1,): Pattern(box1, [0, 0], A2)}, 1, sft
    )
    assert good.ok
    w = good.configuration.window((0,), (4,)).tolist()
    assert w == [0, 1, 0, 0]
    # delta slack lets the forbidden word trace with one mismatch
    relaxed = trace_targets({(0,): Pattern(box1, [1, 1], A2)}, 1, sft, delta="0.5")
    assert relaxed.ok
    assert relaxed.rows[0][2] == 1  # exactly one mismatched cell


def test_trace_sft_rejects_fine_epsilon():
    box1 = make_box(1, P, 1)
    sft = SFT(A2, 1, P, (Pattern(box1, [1, 1], A2),))
    with pytest.raises(ValueError):
        trace_targets({(0,): Pattern(box1, [0, 0], A2)}, 1, sft, epsilon=0.25)


def test_membership_examples():
    x0 = ConstantConfiguration(0, 1, P, A2)
    x1 = ConstantConfiguration(1, 1, P, A2)
    rep_in = membership_Z(x0, 5, "0.1", dirac(x0, 1))
    assert rep_in.status == "in"
    rep_out = membership_Z(x1, 5, "0.1", dirac(x0, 1))
    assert rep_out.status == "out"
    assert rep_out.decisive_shift == (0,)
    assert rep_out.worst_value >= 0.890625 - 1e-12
    assert "finite" in rep_in.note


def test_membership_undecided():
    x0 = ConstantConfiguration(0, 1, P, A2)
    mu = dirac(x0, 1)
    d_self = Fraction(0)
    tail = Fraction(1, 64)
    rep = membership_Z(x0, 2, d_self + tail / 2, mu)
    assert rep.status == "undecided"


# ---------------------------------------------------------------------------
# proximity and disjointness


def test_proximity_check_small_run():
    sub, _ = desk_subshift()
    rep = proximity_check(sub, UNIFORM4, "0.4", samples=5, seed=3)
    assert rep.passed
    assert rep.scale == 21 * 9
    assert rep.threshold == 0.3
    assert rep.max_hi < 0.3
    assert len(rep.scale_rows) == 3
    # single-point distances shrink as the box doubles
    values = [row[1] for row in rep.scale_rows]
    assert values[0] > values[-1]


def test_proximity_rejects_inexact_target():
    sub, _ = desk_subshift()
    mu = CylinderMeasure(
        A4, 1, P, 0, {(s,): 0.25 for s in range(4)}, origin="floats"
    )
    with pytest.raises(ValueError, match="exact"):
        proximity_check(sub, mu, "0.4", samples=1, seed=0)


def test_disjointness_frozen_experiment():
    mu1 = bernoulli(["0.9", "0.1"], 1, 1, P)
    mu2 = bernoulli(["0.1", "0.9"], 1, 1, P)
    rep = disjointness_experiment(mu1, mu2, "0.2", samples=5, seed=0)
    assert rep.passed
    assert rep.distance_lo == 0.7125
    assert rep.guard == 0.6
    assert rep.params1.K == 41 and rep.params1.M == 19
    assert (rep.params1.size_lo, rep.params1.size_hi) == (149, 165)
    assert rep.count1 == rep.count2 == 149
    assert all(status == "out" for _, _, status, _ in rep.cross_rows)


def test_disjointness_guard_rejects_close_measures():
    mu = bernoulli(["0.5", "0.5"], 1, 1, P)
    with pytest.raises(InfeasibleParameters, match="too close"):
        disjointness_experiment(mu, mu, "0.2")
    mu1 = bernoulli(["0.9", "0.1"], 1, 1, P)
    mu2 = bernoulli(["0.1", "0.9"], 1, 1, P)
    with pytest.raises(InfeasibleParameters):
        disjointness_experiment(mu1, mu2, "0.9")  # 3 eta0 = 2.7 > diameter


# ---------------------------------------------------------------------------
# sidecar


def test_sidecar_roundtrip(tmp_path):
    p = desk_params()
    path = tmp_path / "x.meta"
    write_sidecar(path, p, seed=7)
    back = read_sidecar(path)
    assert back["h0"] == "0.5" and back["beta0"] == "0.2" and back["eta0"] == "0.4"
    assert back["M"] == "9" and back["K"] == "21" and back["seed"] == "7"
    assert back["eta"] == "0.1" and back["beta"] == "0.01" and back["h1"] == "0.6"
    assert back["mode"] == "P" and back["b"] == "4" and back["d"] == "1"


def test_sidecar_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.meta"
    path.write_text("h0=0.5\nwat=1\n")
    with pytest.raises(ValueError, match="unknown key"):
        read_sidecar(path)
    path.write_text("h0\n")
    with pytest.raises(ValueError, match="key=value"):
        read_sidecar(path)
