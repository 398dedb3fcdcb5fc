"""DeepSets regressing onto a fixed graph convolution layer, over depths and widths."""

import argparse

from equiset.experiments import gcn_approx_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", default="2")
    ap.add_argument("--widths", default="200")
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    depths = [int(v) for v in args.depths.split(",")]
    widths = [int(v) for v in args.widths.split(",")]
    gcn_approx_table(depths, widths, count=args.count, epochs=args.epochs, seed=args.seed, log=lambda s: print(
        f"width={s.width:4d} train={s.train_loss:.4f} test={s.test_loss:.4f} ({s.seconds:.0f}s)", flush=True))


if __name__ == "__main__":
    main()
