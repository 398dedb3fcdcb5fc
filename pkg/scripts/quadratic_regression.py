"""Fit the quadratic set target with PointNet, PointNetST and DeepSets; print train mse."""

import argparse

from equiset.experiments import QuadraticSetup, quadratic_regression


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--archs", default="PointNet,PointNetST,DeepSets")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    setup = QuadraticSetup(seed=args.seed, archs=tuple(args.archs.split(",")))
    quadratic_regression(setup, log=lambda s: print(
        f"{s.architecture:12s} train mse={s.train_loss:.5g} ({s.seconds:.0f}s)", flush=True))


if __name__ == "__main__":
    main()
