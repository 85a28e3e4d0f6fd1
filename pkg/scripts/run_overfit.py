"""Fully supervised overfit on 50 synthetic instances; prints training-set metrics."""

import argparse

from srnn.experiments import overfit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--lr", type=float, default=5e-3)
    ap.add_argument("--sigma", type=float, default=0.1)
    args = ap.parse_args()
    metrics, run = overfit(seed=args.seed, n=args.n, epochs=args.epochs, lr=args.lr, sigma=args.sigma)
    print(metrics.table(f"srnn-full-seed{args.seed}"), end="")
    print(f"best epoch {run.best_epoch}, {run.seconds:.0f}s")


if __name__ == "__main__":
    main()
