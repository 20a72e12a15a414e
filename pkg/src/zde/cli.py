"""Command-line harness: construct block subshifts, verify them, estimate entropy.

Exit codes: 0 all checks passed; 1 parse/validation failure (bad files,
unknown config keys, failed verification checks); 2 infeasible parameters or
unavailable cylinder depth; 3 sampling budget exhausted; 4 undecided interval
comparisons (retry with a deeper --depth).

Every run echoes its fully resolved configuration into the report, and equal
flags plus equal seeds produce byte-identical outputs.  Reports carry
(value, tail) interval pairs for measure-distance comparisons rather than
bare booleans.  Natural logarithms throughout; --log2 converts display only.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction

from . import construction, counting, lattice, measures, separation, symbolic
from ._util import exact_fraction, keyed_hash
from .construction import DESK, STRICT, InfeasibleParameters, SamplingBudgetExhausted
from .lattice import LatticeMode, make_box
from .symbolic import Alphabet

LN2 = math.log(2)


# ---------------------------------------------------------------------------
# plumbing


def _parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed for all randomness")
    common.add_argument("--out", type=str, default=None, help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--config", type=str, default=None, help="key=value defaults file")
    common.add_argument("--log2", action="store_true", help="display entropies in bits")

    top = argparse.ArgumentParser(prog="zde", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)
    parsers = {}

    p = sub.add_parser("construct", parents=[common], help="sample a block set near a target measure")
    # "required" flags stay optional at parse time so --config can supply them
    p.add_argument("--h0", type=str, default=None)
    p.add_argument("--beta0", type=str, default="0.2")
    p.add_argument("--eta0", type=str, default="0.4")
    p.add_argument("--alphabet", type=int, default=None)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--mode", type=str, default="P", help="P (one-sided) or F (two-sided)")
    p.add_argument("--measure", type=str, default="uniform",
                   help="uniform | bernoulli:p1,p2,... | file:path")
    p.add_argument("--m-cap", type=int, default=None, help="block radius cap (switches to DESK mode)")
    p.add_argument("--depth", type=int, default=1, help="certification depth for block sampling")
    parsers["construct"] = p

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("--suite", choices=("sandwich", "proximity", "lemmas", "disjoint"), default=None)
    p.add_argument("--blocks", type=str, default=None, help="block-set file (sandwich/proximity)")
    p.add_argument("--h0", type=str, default=None)
    p.add_argument("--beta0", type=str, default=None)
    p.add_argument("--eta0", type=str, default=None)
    p.add_argument("--measure", type=str, default="uniform")
    p.add_argument("--measure2", type=str, default=None, help="second target (disjoint suite)")
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--m-cap", type=int, default=19, help="block radius for the disjoint suite")
    parsers["verify"] = p

    p = sub.add_parser("entropy", parents=[common], help="entropy estimate tables")
    p.add_argument("--measure", type=str, default=None)
    p.add_argument("--blocks", type=str, default=None)
    p.add_argument("--alphabet", type=int, default=2)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--mode", type=str, default="P")
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--epsilon-band", type=int, default=None,
                   help="dyadic band index r (uses epsilon = 2^-(r+1))")
    p.add_argument("--delta", type=str, default="0.1")
    p.add_argument("--depth", type=int, default=None, help="cylinder depth for file measures")
    parsers["entropy"] = p

    p = sub.add_parser("sample", parents=[common], help="dump a window of a seeded point")
    p.add_argument("--blocks", type=str, default=None)
    p.add_argument("--box", type=int, default=None, help="window radius")
    parsers["sample"] = p

    return top, parsers


def _read_config(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: want key = value")
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parsers: dict, command: str, config: dict) -> dict:
    actions = {a.dest: a for a in parsers[command]._actions}
    out = {}
    for key, raw in config.items():
        if key not in actions or key in ("help", "command", "config"):
            raise ValueError(f"unknown config key {key!r} for {command}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            value = action.type(raw)
        else:
            value = raw
        out[key] = value
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ZDE_THREADS", "1")))
    except ValueError:
        return 1


def _json_default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, LatticeMode):
        return obj.value
    if hasattr(obj, "item"):
        return obj.item()
    return str(obj)


def _emit(args, report: dict, csv_rows=None, csv_header=None) -> None:
    report = {"schema": 1, **report}
    if args.format == "json":
        text = json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if csv_rows is not None:
            if csv_header:
                writer.writerow(csv_header)
            for row in csv_rows:
                writer.writerow(row)
        else:
            for key in sorted(report):
                if key in ("schema", "config"):
                    continue
                writer.writerow([key, json.dumps(report[key], sort_keys=True, default=_json_default)])
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolved_config(args, keys) -> dict:
    out = {}
    for key in keys:
        value = getattr(args, key)
        if isinstance(value, LatticeMode):
            value = value.value
        out[key] = value
    return out


def _scale(value: float, args) -> float:
    return value / LN2 if args.log2 else value


def _resolve_measure(spec: str, b: int, dim: int, mode: LatticeMode, depth: int):
    alphabet = Alphabet(b)
    if spec == "uniform":
        return measures.bernoulli([Fraction(1, b)] * b, depth, dim, mode, alphabet)
    if spec.startswith("bernoulli:"):
        probs = [tok for tok in spec[len("bernoulli:"):].split(",") if tok]
        if len(probs) != b:
            raise ValueError(f"bernoulli needs {b} cell probabilities, got {len(probs)}")
        return measures.bernoulli(probs, depth, dim, mode, alphabet)
    if spec.startswith("file:"):
        return measures.read_measure(spec[len("file:"):], alphabet, dim, mode)
    raise ValueError(f"unknown measure spec {spec!r}")


def _measure_entropy(mu) -> float:
    if mu.product_p is not None:
        return measures.bernoulli_entropy(mu.product_p)
    # depth-0 marginal entropy: an upper proxy for the true rate of a
    # non-product measure, good enough for feasibility screening
    table = mu.prob_table(0)
    return -sum(float(v) * math.log(float(v)) for v in table.values() if v)


def _load_subshift(path: str):
    alphabet, box, blocks = symbolic.read_blockset(path)
    sidecar = {}
    meta_path = path + ".meta"
    if os.path.exists(meta_path):
        sidecar = construction.read_sidecar(meta_path)
    return construction.build_delta(blocks), sidecar


# ---------------------------------------------------------------------------
# subcommands


def _cmd_construct(args) -> int:
    if args.h0 is None or args.alphabet is None:
        print("zde construct: --h0 and --alphabet are required (flags or config)", file=sys.stderr)
        return 1
    mode = LatticeMode.parse(args.mode)
    b = args.alphabet
    try:
        mu0 = _resolve_measure(args.measure, b, args.dim, mode, args.depth)
    except (ValueError, OSError) as exc:
        print(f"zde construct: {exc}", file=sys.stderr)
        return 1
    entropy = _measure_entropy(mu0)
    flag = DESK if args.m_cap is not None else STRICT
    try:
        params = construction.choose_params(
            args.h0, args.beta0, args.eta0, entropy, b, args.dim, mode,
            mode_flag=flag, m_cap=args.m_cap,
        )
    except InfeasibleParameters as exc:
        print(f"zde construct: infeasible parameters: {exc}", file=sys.stderr)
        return 2
    if not params.feasible_enumeration:
        print(
            "zde construct: the block-count window is too large to enumerate "
            f"(ln bounds {params.log_size_lo:.1f}..{params.log_size_hi:.1f}); pass --m-cap",
            file=sys.stderr,
        )
        return 2
    try:
        blocks = construction.sample_block_set(
            mu0, params.M, params.eta, params.size_lo, params.size_hi, args.seed, depth=args.depth
        )
    except SamplingBudgetExhausted as exc:
        print(f"zde construct: {exc}", file=sys.stderr)
        return 3
    subshift = construction.build_delta(blocks, params, mu0_label=args.measure)
    out_base = args.out or "delta"
    blocks_path = out_base if out_base.endswith(".blocks") else out_base + ".blocks"
    symbolic.write_blockset(blocks_path, list(blocks))
    construction.write_sidecar(blocks_path + ".meta", params, args.seed)
    rep = construction.verify_sandwich(subshift, args.h0, args.beta0, n_max=2, params=params)
    report = {
        "config": _resolved_config(args, ("h0", "beta0", "eta0", "alphabet", "dim", "measure", "seed", "depth")),
        "mode": mode.value,
        "mode_flag": flag,
        "M": params.M,
        "K": params.K,
        "eta": float(params.eta),
        "beta": float(params.beta),
        "h1": float(params.h1),
        "epsilon": float(params.epsilon),
        "delta": params.delta,
        "waived": list(params.waived),
        "block_count": subshift.count,
        "size_window": [params.size_lo, params.size_hi],
        "h_exact": _scale(subshift.h_exact, args),
        "target_interval": [_scale(rep.target_lo, args), _scale(rep.target_hi, args)],
        "sandwich_pass": rep.passed,
        "files": [blocks_path, blocks_path + ".meta"],
    }
    print(
        f"h_exact = {_scale(subshift.h_exact, args):.6f} "
        f"target ({_scale(rep.target_lo, args):.6f}, {_scale(rep.target_hi, args):.6f}) "
        f"blocks = {subshift.count}",
        file=sys.stderr,
    )
    # --out names the block-set base here; the report itself goes to stdout
    _emit(argparse.Namespace(**{**vars(args), "out": None}), report)
    return 0 if rep.passed else 1


def _sidecar_value(args, sidecar, key, fallback=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in sidecar:
        return sidecar[key]
    return fallback


def _cmd_verify(args) -> int:
    if args.suite is None:
        print("zde verify: --suite is required (flags or config)", file=sys.stderr)
        return 1
    if args.suite == "lemmas":
        return _suite_lemmas(args)
    if args.suite == "disjoint":
        return _suite_disjoint(args)
    if not args.blocks:
        print("zde verify: this suite needs --blocks", file=sys.stderr)
        return 1
    try:
        subshift, sidecar = _load_subshift(args.blocks)
    except (ValueError, OSError) as exc:
        print(f"zde verify: cannot read block set: {exc}", file=sys.stderr)
        return 1
    h0 = _sidecar_value(args, sidecar, "h0", "0.5")
    beta0 = _sidecar_value(args, sidecar, "beta0", "0.2")
    eta0 = _sidecar_value(args, sidecar, "eta0", "0.4")
    b = subshift.alphabet.size
    dim, mode = subshift.dim, subshift.mode

    if args.suite == "sandwich":
        params = None
        try:
            mu0 = _resolve_measure(args.measure, b, dim, mode, args.depth)
            params = construction.choose_params(
                h0, beta0, eta0, _measure_entropy(mu0), b, dim, mode,
                mode_flag=DESK, m_cap=subshift.M,
            )
        except (InfeasibleParameters, ValueError):
            params = None  # chain rows skipped; the exact counts still run
        try:
            rep = construction.verify_sandwich(subshift, h0, beta0, args.n_max, params)
        except ValueError as exc:
            print(f"zde verify: {exc}", file=sys.stderr)
            return 1
        report = {
            "config": {"suite": "sandwich", "blocks": args.blocks, "h0": float(exact_fraction(h0)),
                       "beta0": float(exact_fraction(beta0)), "n_max": args.n_max, "seed": args.seed},
            "h_exact": _scale(rep.h_exact, args),
            "target_interval": [_scale(rep.target_lo, args), _scale(rep.target_hi, args)],
            "lower_estimates": [[n, _scale(est, args)] for n, _, _, est in rep.lower_rows],
            "exact_counts": [
                {"n": n, "radius": r, "count": str(c), "bound": str(bound), "estimate": _scale(est, args)}
                for n, r, c, bound, est in rep.exact_rows
            ],
            "upper_bound_chain": [[n, _scale(v, args)] for n, v in rep.chain_rows],
            "notes": list(rep.notes),
            "pass": rep.passed,
        }
        _emit(args, report)
        return 0 if rep.passed else 1

    if args.suite == "proximity":
        try:
            mu0 = _resolve_measure(args.measure, b, dim, mode, args.depth)
            rep = construction.proximity_check(
                subshift, mu0, eta0, samples=args.samples, seed=args.seed,
                depth=args.depth, threads=_threads(),
            )
        except ValueError as exc:
            print(f"zde verify: {exc}", file=sys.stderr)
            return 2
        report = {
            "config": {"suite": "proximity", "blocks": args.blocks, "eta0": float(exact_fraction(eta0)),
                       "samples": args.samples, "depth": args.depth, "seed": args.seed},
            "proximity": {
                # the threshold is a measure distance, not an entropy: --log2 never touches it
                "samples": rep.samples, "shifts": rep.shifts, "scale": rep.scale,
                "threshold": rep.threshold, "max_D": [rep.max_value, rep.max_hi],
                "failures": [list(f) for f in rep.failures],
            },
            "scale_rows": [list(r) for r in rep.scale_rows],
            "note": rep.note,
            "pass": rep.passed,
        }
        _emit(args, report)
        return 0 if rep.passed else 1

    print(f"zde verify: unknown suite {args.suite!r}", file=sys.stderr)
    return 1


def _suite_lemmas(args) -> int:
    rows = []
    ok = True
    # subset-count bound: exact big-integer count against the entropy bound
    for n in range(1, 16):
        for dnum in range(1, 10):
            delta = Fraction(dnum, 20)
            cb = counting.q_count(n, delta, 1, LatticeMode.POSITIVE)
            good = cb.log_value / cb.volume <= cb.bound + 1e-12
            ok &= good
            rows.append(("q_bound", n, float(delta), "", "", good))
    # decomposition remainders: generic and scaled variants, both lattice modes
    for mode in (LatticeMode.POSITIVE, LatticeMode.FULL):
        for d in (1, 2):
            for N in range(1, 4):
                for n in range(N, 13):
                    dec = lattice.decompose_generic(N, n, d, mode)
                    good = dec.remainder_fraction <= Fraction(d * mode.width(N), mode.width(n))
                    ok &= good
                    rows.append(("remainder_generic", mode.value, d, N, n, good))
        for d in (1, 2, 3):
            for K in range(1, 9):
                for M in range(1, 6):
                    dec = lattice.decompose(K, M, d, mode)
                    good = dec.remainder_fraction < Fraction(2 * d, K)
                    ok &= good
                    rows.append(("remainder_scaled", mode.value, d, K, M, good))
    # measure-metric convexity on seeded random mixtures
    alphabet = Alphabet(2)
    violations = 0
    for t in range(200):
        mus = [_random_measure(alphabet, keyed_hash(args.seed, t, j)) for j in range(4)]
        a = Fraction(1 + keyed_hash(args.seed, t, 9) % 9, 10)
        mix1 = measures.mixture([(a, mus[0]), (1 - a, mus[1])])
        mix2 = measures.mixture([(a, mus[2]), (1 - a, mus[3])])
        left = measures.metric_D(mix1, mix2, 1)
        d1 = measures.metric_D(mus[0], mus[2], 1)
        d2 = measures.metric_D(mus[1], mus[3], 1)
        bound = a * d1.value_exact + (1 - a) * d2.value_exact
        if left.value_exact > bound + left.tail_exact + d1.tail_exact + d2.tail_exact:
            violations += 1
    ok &= violations == 0
    rows.append(("convexity", 200, violations, "", "", violations == 0))
    report = {
        "config": {"suite": "lemmas", "seed": args.seed},
        "checks": len(rows),
        "violations": [list(r) for r in rows if not r[-1]],
        "pass": ok,
    }
    _emit(args, report, csv_rows=[list(r) for r in rows], csv_header=["check", "a", "b", "c", "d", "ok"])
    return 0 if ok else 1


def _random_measure(alphabet, seed):
    V = 2  # depth-1 words on the one-sided line
    count = alphabet.size**V
    weights = [1 + keyed_hash(seed, i) % 97 for i in range(count)]
    total = sum(weights)
    freqs = {}
    for code, w in enumerate(weights):
        pat = (code // alphabet.size, code % alphabet.size)
        freqs[pat] = Fraction(w, total)
    return measures.CylinderMeasure(alphabet, 1, LatticeMode.POSITIVE, 1, freqs)


def _suite_disjoint(args) -> int:
    if not args.measure2:
        print("zde verify: the disjoint suite needs --measure and --measure2", file=sys.stderr)
        return 1
    eta0 = args.eta0 if args.eta0 is not None else "0.2"
    h0 = args.h0 if args.h0 is not None else "0.2"
    beta0 = args.beta0 if args.beta0 is not None else "0.1"
    b = 2
    mode = LatticeMode.POSITIVE
    try:
        mu1 = _resolve_measure(args.measure, b, 1, mode, args.depth)
        mu2 = _resolve_measure(args.measure2, b, 1, mode, args.depth)
    except (ValueError, OSError) as exc:
        print(f"zde verify: {exc}", file=sys.stderr)
        return 1
    try:
        rep = construction.disjointness_experiment(
            mu1, mu2, eta0, h0=exact_fraction(h0), beta0=exact_fraction(beta0),
            m_cap=args.m_cap, samples=min(args.samples, 25), seed=args.seed,
        )
    except InfeasibleParameters as exc:
        print(f"zde verify: {exc}", file=sys.stderr)
        return 2
    except SamplingBudgetExhausted as exc:
        print(f"zde verify: {exc}", file=sys.stderr)
        return 3
    undecided = any(status == measures.UNDECIDED for _, _, status, _ in rep.cross_rows)
    report = {
        "config": {"suite": "disjoint", "measure": args.measure, "measure2": args.measure2,
                   "eta0": float(exact_fraction(eta0)), "m_cap": args.m_cap, "seed": args.seed},
        "distance_lo": rep.distance_lo,
        "guard": rep.guard,
        "block_counts": [rep.count1, rep.count2],
        "cross_rows": [[d, s, status, list(k) if k else None] for d, s, status, k in rep.cross_rows],
        "pass": rep.passed,
    }
    _emit(args, report)
    if undecided:
        print("zde verify: undecided distance intervals; retry with a deeper --depth", file=sys.stderr)
        return 4
    return 0 if rep.passed else 1


def _cmd_entropy(args) -> int:
    if bool(args.measure) == bool(args.blocks):
        print("zde entropy: pass exactly one of --measure / --blocks", file=sys.stderr)
        return 1
    if args.epsilon is not None and args.epsilon_band is not None:
        print("zde entropy: pass at most one of --epsilon / --epsilon-band", file=sys.stderr)
        return 1
    epsilon = args.epsilon
    if args.epsilon_band is not None:
        epsilon = 2.0 ** -(args.epsilon_band + 1)
    if epsilon is None:
        epsilon = 0.5
    rows = []
    if args.measure:
        mode = LatticeMode.parse(args.mode)
        depth = args.depth if args.depth is not None else max(4, args.window + 2)
        try:
            mu = _resolve_measure(args.measure, args.alphabet, args.dim, mode, min(depth, 2))
        except (ValueError, OSError) as exc:
            print(f"zde entropy: {exc}", file=sys.stderr)
            return 1
        for n in range(1, args.window + 1):
            try:
                kat = separation.katok_entropy(mu, n, epsilon, args.delta)
            except ValueError as exc:
                print(f"zde entropy: {exc}", file=sys.stderr)
                return 2
            V = make_box(args.dim, mode, n).volume
            rows.append([n, V, epsilon, float(exact_fraction(args.delta)),
                         str(kat.count), _scale(kat.estimate, args), "katok"])
    else:
        try:
            subshift, _ = _load_subshift(args.blocks)
        except (ValueError, OSError) as exc:
            print(f"zde entropy: cannot read block set: {exc}", file=sys.stderr)
            return 1
        for n in range(1, args.window + 1):
            radius = lattice.compose(n, subshift.M, subshift.mode)
            V_n = make_box(subshift.dim, subshift.mode, n).volume
            V_win = make_box(subshift.dim, subshift.mode, radius).volume
            count = subshift.count**V_n
            rows.append([radius, V_win, "", "", str(count),
                         _scale(math.log(count) / V_win, args), "grid-count"])
    report = {
        "config": {
            "measure": args.measure, "blocks": args.blocks, "window": args.window,
            "epsilon": epsilon, "delta": args.delta, "seed": args.seed,
            "log_base": 2 if args.log2 else "e",
        },
        "rows": rows,
        "estimate": rows[-1][5],
        "finite_scale": True,
    }
    _emit(args, report, csv_rows=rows,
          csv_header=["n", "V_n", "epsilon", "delta", "count", "estimate", "method"])
    return 0


def _cmd_sample(args) -> int:
    if args.blocks is None or args.box is None:
        print("zde sample: --blocks and --box are required (flags or config)", file=sys.stderr)
        return 1
    try:
        subshift, _ = _load_subshift(args.blocks)
    except (ValueError, OSError) as exc:
        print(f"zde sample: cannot read block set: {exc}", file=sys.stderr)
        return 1
    z = construction.random_delta_point(subshift, args.seed)
    box = make_box(subshift.dim, subshift.mode, args.box)
    window = z.window(box.min_corner, box.shape)
    lines = []
    flat = window.reshape(-1, window.shape[-1])
    for row in flat:
        lines.append(" ".join(str(int(s)) for s in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry


def run(argv) -> int:
    top, parsers = _parser()
    try:
        args = top.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    if args.config:
        try:
            config = _read_config(args.config)
            defaults = _apply_config(parsers, args.command, config)
        except (ValueError, OSError) as exc:
            print(f"zde: {exc}", file=sys.stderr)
            return 1
        # config supplies defaults only; explicit flags still win on reparse
        parsers[args.command].set_defaults(**defaults)
        try:
            args = top.parse_args(argv)
        except SystemExit as exc:
            return 1 if exc.code not in (0, None) else 0
    handler = {
        "construct": _cmd_construct,
        "verify": _cmd_verify,
        "entropy": _cmd_entropy,
        "sample": _cmd_sample,
    }[args.command]
    return handler(args)


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
