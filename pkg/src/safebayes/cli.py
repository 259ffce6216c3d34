"""Command line interface.

Subcommands::

    safebayes run --config F --out D [--runs N] [--seed S] [--threads T]
    safebayes sweep-eta --config F --n N [--out D] [--threads T]
    safebayes bernoulli --theta-star V --n-list L --trials T [--seed S]
    safebayes oracle-check

Exit codes: 0 success, 1 config error, 2 numerical failure.  The --threads
fallback is the SAFEBAYES_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("SAFEBAYES_THREADS")
    return max(1, int(env)) if env else 1


def _load(path: str):
    from .experiment import ConfigError, load_config

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(1)
    try:
        return load_config(doc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(1)


def _cmd_run(args) -> int:
    from .conjugate import NotPositiveDefiniteError
    from .experiment import run_matrix, sweep_eta, write_outputs

    config = _load(args.config)
    if args.runs is not None:
        config = dataclasses.replace(config, runs=args.runs)
    if args.seed is not None:
        config = dataclasses.replace(config, base_seed=args.seed)
    try:
        rows = run_matrix(config, threads=_threads(args))
        write_outputs(rows, args.out, config)
    except (NotPositiveDefiniteError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    from .conjugate import NotPositiveDefiniteError
    from .experiment import ConfigError, sweep_eta, write_sweep_csv

    config = _load(args.config)
    try:
        acc = sweep_eta(config, args.n, threads=_threads(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NotPositiveDefiniteError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep_eta.csv")
    write_sweep_csv(acc, path)
    print(f"wrote {path}")
    return 0


def _cmd_bernoulli(args) -> int:
    from .diagnostics import bernoulli_toy
    from .seeds import mix64

    n_list = [int(v) for v in args.n_list.split(",") if v]
    rng = np.random.default_rng(mix64(args.seed, 0))
    print("theta_star n trials P(|L|>sqrt(n)/2) P(wrong side, ties incl.) mean_Delta_n delta_bound_ok")
    for n in n_list:
        stats = bernoulli_toy(args.theta_star, n, args.trials, rng)
        print(
            f"{args.theta_star} {n} {args.trials} "
            f"{stats.p_large_L:.4f} {stats.p_wrong:.5f} {stats.mean_delta_cum:.4f} {stats.delta_bound_ok}"
        )
    return 0


def _cmd_oracle(args) -> int:
    from .oracles import run_oracle_suite

    results = run_oracle_suite(verbose=True)
    return 0 if all(ok for _, ok, _ in results) else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="safebayes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config and write CSV outputs")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--runs", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep-eta", help="cumulative losses per grid eta at sample size n")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--n", type=int, required=True)
    p_sweep.add_argument("--out", default=".")
    p_sweep.add_argument("--threads", type=int, default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_bern = sub.add_parser("bernoulli", help="two-point Bernoulli concentration toy")
    p_bern.add_argument("--theta-star", type=float, required=True)
    p_bern.add_argument("--n-list", required=True, help="comma-separated sample sizes")
    p_bern.add_argument("--trials", type=int, default=10000)
    p_bern.add_argument("--seed", type=int, default=0)
    p_bern.set_defaults(func=_cmd_bernoulli)

    p_oracle = sub.add_parser("oracle-check", help="quadrature / Monte Carlo oracle suite")
    p_oracle.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
