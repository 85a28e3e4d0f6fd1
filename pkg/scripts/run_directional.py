"""Held-out comparison of SRNN (full and partial supervision), BIO and CTC.

Each seed draws its own train/dev/test corpus in which every label has a
fixed, label-specific duration. Prints one metrics row per system and seed,
then the per-system means.
"""

import argparse
import sys

from srnn.experiments import ExperimentConfig, compare, mean


def main():
    defaults = ExperimentConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--modes", nargs="+", default=["full", "partial", "bio", "ctc"])
    ap.add_argument("--sigma", type=float, default=defaults.sigma)
    ap.add_argument("--epochs", type=int, default=defaults.epochs)
    ap.add_argument("--n-train", type=int, default=defaults.n_train)
    args = ap.parse_args()
    cfg = ExperimentConfig(sigma=args.sigma, epochs=args.epochs, n_train=args.n_train)
    header = True

    def show(r):
        nonlocal header
        table = r.metrics.table(f"{r.mode}-seed{r.seed}").splitlines()
        if header:
            print(table[0])
            header = False
        print(table[1], flush=True)

    results = compare(args.modes, args.seeds, cfg, progress=show)
    print()
    for mode, runs in results.items():
        f_tag = "-" if runs[0].metrics.F_tag is None else f"{mean(runs, 'F_tag'):.4f}"
        f_seg = "-" if runs[0].metrics.F_seg is None else f"{mean(runs, 'F_seg'):.4f}"
        print(f"mean {mode}\tF_seg {f_seg}\tF_tag {f_tag}\terror {mean(runs, 'error_rate'):.4f}")
    sys.stdout.flush()


if __name__ == "__main__":
    main()
