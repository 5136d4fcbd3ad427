"""Monte Carlo rejection rates of the ADF test on white noise and random walks."""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from honeycast.adf import adf_test


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--n", type=int, default=250)
    ap.add_argument("--seed", type=int, default=4)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    hits = {"white_noise": 0, "random_walk": 0, "differenced_walk": 0}
    t0 = time.perf_counter()
    for _ in range(args.reps):
        e = rng.normal(size=args.n)
        walk = np.cumsum(rng.normal(size=args.n))
        hits["white_noise"] += adf_test(e).stationary
        hits["random_walk"] += adf_test(walk).stationary
        hits["differenced_walk"] += adf_test(np.diff(walk)).stationary
    rates = {k: v / args.reps for k, v in hits.items()}
    print(json.dumps({"reps": args.reps, "n": args.n, "seed": args.seed,
                      "rejection_rate": rates, "seconds": round(time.perf_counter() - t0, 1)},
                     indent=2))


if __name__ == "__main__":
    main()
