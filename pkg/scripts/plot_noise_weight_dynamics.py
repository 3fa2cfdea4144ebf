#!/usr/bin/env python3
"""Trace the two-weight regression showing noise weights contract to zero.

Fits f(x1, x2) = w1*x1 + w2*x2 to the target a*x1 by SGD, where x2 is pure
noise with configurable mean, and writes one trajectory CSV per mean. The
noise weight w2 converges to 0 regardless of its mean while w1 -> a.

Example:
    python3 scripts/plot_noise_weight_dynamics.py --target-a 1.0 --out results/conjecture
"""

import argparse
import os
import sys

from anfrl.harness import conjecture_oracle


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target-a", type=float, default=1.0)
    ap.add_argument("--means", type=float, nargs="+", default=[0.0, 1.0, -2.0, 4.0])
    ap.add_argument("--steps", type=int, default=30_000)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--out", default="results/conjecture")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    for mu in args.means:
        traj = conjecture_oracle(args.target_a, mu, lr=args.lr, steps=args.steps)
        path = os.path.join(args.out, f"trajectory_mu{mu:g}.csv")
        with open(path, "w") as f:
            f.write("step,w1,w2\n")
            for i, (w1, w2) in enumerate(traj):
                f.write(f"{i},{float(w1)!r},{float(w2)!r}\n")
        w1, w2 = traj[-1]
        print(f"mu={mu:>5g}: w1={w1:+.6f} (target {args.target_a}), "
              f"w2={w2:+.2e} -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
