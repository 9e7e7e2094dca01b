#!/usr/bin/env python3
"""Train every variant on the synthetic benchmark and print a summary table.

Runs the full model, the phase knock-outs, and the labeled-target-only
baseline over a handful of seeds, then reports mean/std test accuracy and
a paired t-test of full vs. each alternative. This is the scripted twin
of the end-to-end gates in tests/test_acceptance.py.

Usage:
    python3 scripts/synthetic_benchmark.py [--seeds 7,8,9,10,11] [--quick]
"""

import argparse
import sys
import time

import numpy as np

from hetda.datasets import (
    AdaptationTask,
    SplitSpec,
    SyntheticSpec,
    make_synthetic,
    split_target,
    standardize_task,
)
from hetda.metrics import paired_t_test
from hetda.trainer import TrainConfig, ablate, accuracy_on, target_only_baseline


def build_task(seed: int) -> AdaptationTask:
    source, target = make_synthetic(SyntheticSpec(shift=1.0, seed=seed))
    labeled, unlabeled, test = split_target(target, SplitSpec(10, seed=seed))
    return standardize_task(AdaptationTask(source, labeled, unlabeled, test))


def build_config(seed: int, quick: bool) -> TrainConfig:
    return TrainConfig(
        max_outer_iters=600 if quick else 2500,
        seed=seed,
        lr_cls=3e-3,
        n_cls=2,
        beta=3.0,
        lr_sdl=3e-3,
        batch_labeled=8,
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="7,8,9,10,11", help="comma-separated seed list")
    ap.add_argument("--quick", action="store_true", help="cap iterations for a fast smoke run")
    args = ap.parse_args(argv)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    variants = ("full", "noadv", "nosdl", "sequential")
    acc: dict[str, list[float]] = {v: [] for v in (*variants, "baseline")}
    stop_iters = []
    start = time.time()
    for seed in seeds:
        task = build_task(seed)
        cfg = build_config(seed, args.quick)
        for mode in variants:
            result = ablate(mode, task, cfg)
            acc[mode].append(result.accuracy)
            if mode == "full":
                stop_iters.append(result.state.converged_iter)
        base = target_only_baseline(task, cfg)
        acc["baseline"].append(accuracy_on(base, task.target_test))
        print(f"seed {seed}: " + "  ".join(f"{m}={acc[m][-1]:.4f}" for m in acc), file=sys.stderr)

    print(f"\n{len(seeds)} seeds, {time.time() - start:.1f}s total; "
          f"full-model stop iterations: {stop_iters}\n")
    print(f"{'variant':<12} {'mean':>8} {'std':>8} {'t vs full':>10} {'p':>8}")
    full = np.array(acc["full"])
    for name in ("full", "noadv", "nosdl", "sequential", "baseline"):
        a = np.array(acc[name])
        if name == "full" or len(seeds) < 2:
            t_str, p_str = "-", "-"
        else:
            t = paired_t_test(full, a)
            t_str, p_str = f"{t.t:.3f}", f"{t.p:.3f}"
        std = a.std(ddof=1) if len(a) > 1 else 0.0
        print(f"{name:<12} {a.mean():>8.4f} {std:>8.4f} {t_str:>10} {p_str:>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
