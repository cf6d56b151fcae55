"""Command-line entry point.

Subcommands: gen (write an instance file), locate (label one instance),
bench (trial sweeps with JSON/CSV reports), active (active-learner
benchmark), selftest (fast invariant battery).

Exit codes: 0 success, 1 invariant violation, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import InvalidSpec, PointlocError
from .geometry import QueryOracle, lift_instance
from .harness import (
    emit_report,
    instance_from_json,
    instance_to_json,
    run_experiment,
    run_trial,
    truth_labels,
)
from .instances import FAMILIES, InstanceSpec, gen_instance
from .seeding import SEED_ENV_VAR, SeedStream, default_seed
from .verification import zero_error_locate
from .learners import boost


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pointloc",
        description="Point location / active halfspace learning benchmark engine",
        epilog=f"Default seed comes from ${SEED_ENV_VAR} when set.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default_seed())
    common.add_argument("--theory-constants", action="store_true",
                        help="use the asymptotic parameter formulas")
    common.add_argument("--out", type=str, default=None)

    g = sub.add_parser("gen", parents=[common], help="generate an instance file")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--family", choices=FAMILIES, default="uniform-sphere")

    l = sub.add_parser("locate", parents=[common], help="label one instance")
    l.add_argument("--in", dest="infile", type=str, default=None,
                   help="instance JSON from `pointloc gen`")
    l.add_argument("--d", type=int, default=8)
    l.add_argument("--n", type=int, default=200)
    l.add_argument("--family", choices=FAMILIES, default="uniform-sphere")
    l.add_argument("--mode", choices=["bounded", "zero"], default="zero")
    l.add_argument("--delta", type=float, default=0.1)

    b = sub.add_parser("bench", parents=[common], help="run a trial sweep")
    b.add_argument("--mode", choices=["bounded", "zero", "active"],
                   default="bounded")
    b.add_argument("--family", action="append", choices=FAMILIES, default=None)
    b.add_argument("--d", dest="d_list", type=_int_list, default=[4, 8])
    b.add_argument("--n", dest="n_list", type=_int_list, default=[100])
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--epsilon", type=float, default=0.05)

    a = sub.add_parser("active", parents=[common], help="active-learner benchmark")
    a.add_argument("--d", type=int, default=2)
    a.add_argument("--epsilon", type=float, default=0.05)
    a.add_argument("--delta", type=float, default=0.1)
    a.add_argument("--trials", type=int, default=10)

    sub.add_parser("selftest", parents=[common], help="fast invariant battery")
    return ap


def _cmd_gen(args) -> int:
    spec = InstanceSpec(d=args.d, n=args.n, family=args.family, seed=args.seed)
    pair, hidden = gen_instance(spec)
    text = instance_to_json(pair, hidden, spec)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_locate(args) -> int:
    cfg = DEFAULT_CONFIG
    if args.theory_constants:
        cfg = cfg.with_theory_constants()
    if args.infile:
        with open(args.infile, encoding="utf-8") as fh:
            pair, hidden, raw = instance_from_json(fh.read())
        family = raw.get("family", "uniform-sphere")
    else:
        spec = InstanceSpec(d=args.d, n=args.n, family=args.family,
                            seed=args.seed)
        pair, hidden = gen_instance(spec)
        family = args.family
    binary = family == "lifted-nonhomogeneous"
    oracle = QueryOracle(hidden, mode="binary" if binary else "ternary",
                         sign_floor=cfg.sign_floor)
    rng = SeedStream(args.seed).child("locate")
    work = lift_instance(pair).points if binary else pair.points
    if args.mode == "zero":
        labels, record = zero_error_locate(oracle, work, rng, cfg)
    else:
        labels, record, _ = boost(oracle, work, args.delta, rng, cfg)
    truth = truth_labels(pair.points, hidden, binary, cfg.sign_floor)
    errors = int(np.sum(labels != truth))
    payload = {
        "labels": labels.tolist(),
        "queries_total": record.queries_total,
        "oracle_calls": record.oracle_calls,
        "rounds": record.rounds,
        "errors_vs_truth": errors,
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(f"labeled {len(labels)} points in {record.queries_total} queries, "
          f"{errors} errors vs planted hyperplane")
    return 1 if errors and args.mode == "zero" else 0


def _cmd_bench(args) -> int:
    config = {
        "mode": args.mode,
        "families": args.family or ["uniform-sphere"],
        "d_list": args.d_list,
        "n_list": args.n_list,
        "trials": args.trials,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "theory_constants": bool(args.theory_constants),
    }
    report = run_experiment(config)
    if args.out:
        for path in emit_report(report, args.out):
            print(f"wrote {path}")
    for key, agg in report.aggregates.items():
        if key == "invariant_violations":
            continue
        print(f"{key}: median_queries={agg['median_queries']:.0f} "
              f"errors={agg['total_errors']} failures={agg['failures']}")
    return 1 if report.failed else 0


def _cmd_active(args) -> int:
    config = {
        "mode": "active",
        "families": ["uniform-sphere"],
        "d_list": [args.d],
        "n_list": [1],
        "trials": args.trials,
        "delta": args.delta,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "theory_constants": bool(args.theory_constants),
    }
    report = run_experiment(config)
    if args.out:
        for path in emit_report(report, args.out):
            print(f"wrote {path}")
    bad = 0
    for row in report.trials:
        held_err = row["errors_vs_truth"] / max(row["labeled"], 1)
        if held_err > args.epsilon or row["error"]:
            bad += 1
    frac = bad / max(len(report.trials), 1)
    print(f"{len(report.trials)} trials, {bad} exceeded epsilon "
          f"(fraction {frac:.3f})")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(seed=args.seed, verbose=True)
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    handlers = {
        "gen": _cmd_gen,
        "locate": _cmd_locate,
        "bench": _cmd_bench,
        "active": _cmd_active,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (InvalidSpec, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PointlocError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
