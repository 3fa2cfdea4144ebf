"""Command-line front end: training runs, experiment suites, analysis of run
artifacts, environment inspection, and the noise-weight convergence check.

Exit codes: 0 success, 2 usage/config error, 3 numerical abort, 4 IO failure.
"""

from __future__ import annotations

import argparse
import json
import sys


from . import analytics, config as config_mod, envs, harness
from .errors import ConfigError, TrainingDiverged, UsageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _config_key_reference() -> str:
    lines = ["config keys (section.key = default):"]
    defaults = harness.ExperimentConfig()
    for dotted, (target, _) in config_mod.KNOWN_KEYS.items():
        if target.startswith("ene."):
            value = getattr(defaults.ene, target[4:], "(path)")
        else:
            value = getattr(defaults, target, None)
        lines.append(f"  {dotted} = {value}")
    lines.append(f"builtin presets: {', '.join(sorted(config_mod.PRESETS))}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anf",
        description="Dynamic-sparse-training RL experiments on extremely noisy "
                    "environments.",
        epilog=_config_key_reference(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training configuration")
    p.add_argument("--config", required=True,
                   help="config file path or builtin preset name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--override", action="append", default=[], metavar="SEC.KEY=V")
    p.add_argument("--out", default=None, help="output directory for artifacts")
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint file to resume from")

    p = sub.add_parser("suite", help="run a named experiment suite")
    p.add_argument("name")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--algorithm", choices=("td3", "sac"), default="td3")
    p.add_argument("--override", action="append", default=[], metavar="SEC.KEY=V")
    p.add_argument("--out", default=None)
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("analyze", help="aggregate metrics CSVs from runs")
    p.add_argument("metrics", nargs="+", help="metrics CSV files (one per seed)")
    p.add_argument("--out", default=None, help="write the mean/CI curve CSV here")
    p.add_argument("--svg", default=None, help="also write an SVG of a "
                                               "connectivity CSV given with --connectivity")
    p.add_argument("--connectivity", default=None)

    p = sub.add_parser("env-info", help="print environment dimensions")
    p.add_argument("env", nargs="?", default=None)
    p.add_argument("--noise-fraction", type=float, default=0.0)
    p.add_argument("--table", action="store_true",
                   help="print the reference benchmark dimension table")

    p = sub.add_parser("conjecture", help="check that the noise weight converges to 0")
    p.add_argument("--mu", type=float, default=0.0, help="noise feature mean")
    p.add_argument("--target-a", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=30_000)
    p.add_argument("--out", default=None, help="trajectory CSV path")
    return parser


def _cmd_train(args) -> int:
    cfg = config_mod.load_config(args.config, args.override)
    d_ene = envs.ene_dim(envs.make_env(cfg.env_name).d_og, cfg.ene.noise_fraction)
    print(f"env={cfg.env_name} algorithm={cfg.algorithm} mode={cfg.mode} "
          f"d_ene={d_ene} seed={args.seed}")
    log = harness.run_training(cfg, args.seed, out_dir=args.out,
                               checkpoint_every=args.checkpoint_every,
                               resume_from=args.resume)
    if len(log.eval_steps) >= 10:
        print(f"final score: {harness.final_score(log):.3f}")
    print(f"actor params: {log.actor_param_count}, wall clock: {log.wall_clock:.1f}s")
    return EXIT_OK


def _cmd_suite(args) -> int:
    if args.name not in harness.SUITE_NAMES:
        print(f"unknown suite '{args.name}'. available: "
              f"{', '.join(harness.SUITE_NAMES)}", file=sys.stderr)
        return EXIT_CONFIG
    base = None
    if args.override:
        flat = config_mod.apply_overrides({}, args.override)
        base = config_mod._merge_into(harness.ExperimentConfig(algorithm=args.algorithm), flat)
    rows = harness.run_suite(args.name, seeds=args.seeds, algorithm=args.algorithm,
                             base=base, out_dir=args.out)
    if args.json:
        print(json.dumps([{
            "label": r.label, "algorithm": r.algorithm, "env": r.env_name,
            "final_score_mean": r.mean, "ci_half_width": r.ci_half_width,
            "actor_param_count": r.actor_param_count,
            "final_scores": r.final_scores, "error": r.error,
        } for r in rows], indent=2))
    else:
        print(harness.format_suite_table(rows))
    return EXIT_OK


def _cmd_analyze(args) -> int:
    logs = []
    for path in args.metrics:
        steps, returns = [], []
        with open(path) as f:
            f.readline()
            for line in f:
                parts = line.strip().split(",")
                steps.append(int(parts[0]))
                returns.append(float(parts[1]))
        log = harness.MetricsLog(seed=0, total_steps=steps[-1] if steps else 0,
                                 eval_steps=steps, eval_returns=returns)
        logs.append(log)
    grid, mean, half = harness.aggregate_seeds(logs)
    if args.out:
        with open(args.out, "w") as f:
            f.write("step,mean_return,ci_half_width\n")
            for s, m, h in zip(grid, mean, half):
                f.write(f"{s},{float(m)!r},{float(h)!r}\n")
        print(f"wrote {args.out}")
    else:
        for s, m, h in zip(grid, mean, half):
            print(f"{s}\t{m:.3f} ± {h:.3f}")
    if args.connectivity and args.svg:
        timelines = analytics.load_timelines_csv(args.connectivity)
        analytics.export_timeline_svg(timelines, args.svg)
        print(f"wrote {args.svg}")
    return EXIT_OK


def _cmd_env_info(args) -> int:
    if args.table:
        print(f"{'environment':<14} {'d_og':>6} {'action':>7} " +
              " ".join(f"nf={nf:>5}" for nf in envs.NOISE_FRACTIONS))
        for name, (d_og, act) in envs.MUJOCO_DIMS.items():
            dims = " ".join(f"{envs.ene_dim(d_og, nf):>8}" for nf in envs.NOISE_FRACTIONS)
            print(f"{name:<14} {d_og:>6} {act:>7} {dims}")
        return EXIT_OK
    if args.env is None:
        raise ConfigError("give an environment name or --table")
    env = envs.make_env(args.env)
    d_ene = envs.ene_dim(env.d_og, args.noise_fraction)
    print(f"env: {args.env}")
    print(f"d_og: {env.d_og}")
    print(f"action_dim: {env.action_dim}")
    print(f"d_ene (noise_fraction={args.noise_fraction}): {d_ene}")
    return EXIT_OK


def _cmd_conjecture(args) -> int:
    traj = harness.conjecture_oracle(args.target_a, args.mu, lr=args.lr,
                                     steps=args.steps)
    w1, w2 = traj[-1]
    if args.out:
        with open(args.out, "w") as f:
            f.write("step,w1,w2\n")
            for i, (a, b) in enumerate(traj):
                f.write(f"{i},{float(a)!r},{float(b)!r}\n")
    ok = abs(w2) < 1e-3 and abs(w1 - args.target_a) < 1e-2
    print(f"mu={args.mu} target_a={args.target_a} -> w1={w1:.6f} w2={w2:.6e} "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "suite": _cmd_suite,
        "analyze": _cmd_analyze,
        "env-info": _cmd_env_info,
        "conjecture": _cmd_conjecture,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
