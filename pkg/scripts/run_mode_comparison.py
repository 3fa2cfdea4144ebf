#!/usr/bin/env python3
"""Compare dense / dynamic-sparse / static-sparse training on a noisy toy env.

Runs each mode over several seeds, prints the final-score table, and writes
metrics + connectivity CSVs (plus an SVG of the first sparse run's input-layer
connectivity) under --out.

Example:
    python3 scripts/run_mode_comparison.py --env point_mass_reach \
        --algorithm td3 --seeds 3 --steps 20000 --out results/comparison
"""

import argparse
import os
import sys

import numpy as np

from anfrl import analytics
from anfrl.envs import ENEConfig
from anfrl.harness import (ExperimentConfig, final_score, pooled_standard_error,
                           run_training)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", default="linear_tracker")
    ap.add_argument("--algorithm", choices=("td3", "sac"), default="td3")
    ap.add_argument("--noise-fraction", type=float, default=0.9)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=60_000)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--out", default="results/comparison")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    scores: dict[str, list[float]] = {}
    for mode in ("anf", "static_anf", "dense"):
        cfg = ExperimentConfig(env_name=args.env, algorithm=args.algorithm,
                               mode=mode, total_steps=args.steps,
                               hidden_dims=(args.hidden, args.hidden),
                               ene=ENEConfig(noise_fraction=args.noise_fraction))
        scores[mode] = []
        for seed in range(args.seeds):
            out = os.path.join(args.out, f"{mode}_seed{seed}")
            log = run_training(cfg, seed, out_dir=out)
            fs = final_score(log)
            scores[mode].append(fs)
            print(f"{mode:<11} seed {seed}: final score {fs:8.2f} "
                  f"({log.actor_param_count} actor params, "
                  f"{log.wall_clock:.0f}s)", flush=True)
            if mode == "anf" and seed == 0 and log.timelines:
                analytics.export_timeline_svg(
                    log.timelines, os.path.join(args.out, "connectivity.svg"))

    print()
    for mode, vals in scores.items():
        print(f"{mode:<11} mean {np.mean(vals):8.2f}  "
              f"std {np.std(vals, ddof=1) if len(vals) > 1 else 0.0:6.2f}")
    if args.seeds >= 2:
        se = pooled_standard_error(scores["anf"], scores["dense"])
        gap = np.mean(scores["anf"]) - np.mean(scores["dense"])
        print(f"\nanf - dense gap: {gap:.2f} ({gap / se:.2f} pooled SEs)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
