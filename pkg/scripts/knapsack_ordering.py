"""Train every architecture on desk-scale knapsack and print test success rates."""

import argparse
import csv
from dataclasses import asdict

from equiset.experiments import KnapsackSetup, knapsack_ordering


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--width", type=int, default=16)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="optional output table")
    args = ap.parse_args()
    setup = KnapsackSetup(n=args.n, width=args.width, epochs=args.epochs, seed=args.seed)
    res = knapsack_ordering(setup, log=lambda s: print(
        f"{s.architecture:12s} params={s.params:6d} train={s.train_metric:.3f} test={s.test_metric:.3f} ({s.seconds:.0f}s)",
        flush=True))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            rows = [asdict(r) for r in res.values()]
            w = csv.DictWriter(fh, list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
