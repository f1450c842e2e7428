"""Command-line entry point: ``run``, ``validate`` and ``oracle-check``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time

import numpy as np

from reshuffle.experiments import ConfigError, parse_config, run_experiment, validate_config
from reshuffle.models import PriceDataError
from reshuffle.particles import ParticleCollapse
from reshuffle.selection import (
    BRUTE_FORCE_MAX_S,
    brute_force_kl_optimum,
    brute_force_tv_optimum,
    kl_objective,
    kl_reshuffle,
    tv_objective,
    tv_reshuffle,
)


def oracle_check(max_s: int, trials: int = 1000, seed: int = 0) -> list[str]:
    """Compare KL/TV reshuffling against exhaustive search on random weights.

    Returns a list of failure descriptions (empty on success).
    """
    if not 1 <= max_s <= BRUTE_FORCE_MAX_S:
        raise ValueError(f"--max-s must lie in [1, {BRUTE_FORCE_MAX_S}]")
    rng = np.random.default_rng(seed)
    failures = []
    for t in range(trials):
        S = int(rng.integers(1, max_s + 1))
        w = rng.dirichlet(np.full(S, 0.5))
        kl = kl_reshuffle(w)
        _, kl_best = brute_force_kl_optimum(w)
        if abs(kl_objective(w, kl) - kl_best) > 1e-9:
            failures.append(f"trial {t}: kl S={S} w={w.tolist()} got {kl.tolist()}")
        tv = tv_reshuffle(w)
        _, tv_best = brute_force_tv_optimum(w)
        if abs(tv_objective(w, tv) - tv_best) > 1e-12:
            failures.append(f"trial {t}: tv S={S} w={w.tolist()} got {tv.tolist()}")
        if np.any(tv < np.floor(S * w) - 1e-9) or np.any(tv > np.ceil(S * w) + 1e-9):
            failures.append(f"trial {t}: tv count outside floor/ceil bracket")
    return failures


def _load(path, seed=None, threads=None, output_dir=None):
    cfg = parse_config(path)
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if threads is not None:
        changes["threads"] = threads
    if output_dir is not None:
        changes["output_dir"] = str(output_dir)
    if changes:
        cfg = validate_config(dataclasses.replace(cfg, **changes))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reshuffle", description="Offspring-selection experiments for particle filters.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write CSV tables")
    run.add_argument("config")
    run.add_argument("--output-dir")
    run.add_argument("--threads", type=int)
    run.add_argument("--seed", type=int)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.add_argument("--seed", type=int)
    val.add_argument("--threads", type=int)
    val.add_argument("--output-dir")

    orc = sub.add_parser("oracle-check", help="compare reshuffling against exhaustive search")
    orc.add_argument("--max-s", type=int, required=True)
    orc.add_argument("--trials", type=int, default=1000)
    orc.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "oracle-check":
            t0 = time.perf_counter()
            failures = oracle_check(args.max_s, args.trials, args.seed)
            for f in failures:
                print(f"FAIL {f}")
            status = "FAIL" if failures else "PASS"
            print(f"{status} oracle-check: {args.trials} trials, S <= {args.max_s}, "
                  f"{len(failures)} failures, {time.perf_counter() - t0:.2f} s")
            return 1 if failures else 0

        cfg = _load(args.config, args.seed, args.threads, args.output_dir)
        if args.command == "validate":
            print(f"OK {args.config}: experiment={cfg.experiment}")
            return 0
        files = run_experiment(cfg)
        for name, path in files.items():
            print(f"{name}: {path}")
        return 0
    except (ConfigError, PriceDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParticleCollapse, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
