#!/usr/bin/env python3
"""Generate a synthetic foraminiferal-style dataset CSV.

Draws 30 compositions with a log-depth covariate from a known simple model
and zeroes one component in 5 rows, then writes example_data.csv suitable
for the `zadr` CLI.
"""

import argparse
import csv

import numpy as np

from zadr.model import alpha_matrix

TRUE_B = np.array([
    [-1.225, 0.117],
    [-2.392, 0.087],
    [-2.298, -0.046],
])
TRUE_PHI = 15.889
COMPONENTS = ["Triloba", "Obesa", "Pachyderma", "Atlantica"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=30)
    parser.add_argument("--zeros", type=int, default=5)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", default="example_data.csv")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    depth = np.log(np.arange(1, args.n + 1, dtype=float))
    X = np.column_stack([np.ones(args.n), depth])
    A = alpha_matrix(X, TRUE_B, 0)
    g = rng.standard_gamma(TRUE_PHI * A)
    g = np.maximum(g, np.finfo(float).tiny)
    if args.zeros > 0:
        rows = rng.choice(args.n, size=args.zeros, replace=False)
        g[rows, rng.integers(1, 4, size=args.zeros)] = 0.0
    Y = g / g.sum(axis=1, keepdims=True)

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPONENTS + ["logdepth"])
        for i in range(args.n):
            w.writerow([repr(float(v)) for v in Y[i]] + [repr(float(depth[i]))])
    print(f"wrote {args.out} ({args.n} rows, {args.zeros} zero rows)")


if __name__ == "__main__":
    main()
