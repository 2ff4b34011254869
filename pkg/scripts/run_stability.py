"""Response of the self-consistent solution to a perturbation of size eps."""
import argparse

import numpy as np

from msle.numerics import SeededRng
from msle.stieltjes import stability_differences, stability_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t", type=float, nargs="+", default=[1e-3, 0.1, 1.0])
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    eps = np.logspace(-8, -2, 7)
    for t in args.t:
        rng = SeededRng(args.seed)
        _, d = stability_differences(t, args.eta, eps, rng.gen)
        slope = stability_experiment(t, args.eta, eps, SeededRng(args.seed).gen)
        print(f"t={t:g}  exponent={slope:.4f}  |ds|/eps: " + " ".join(f"{r:.3g}" for r in d / eps))


if __name__ == "__main__":
    main()
