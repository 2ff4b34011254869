"""Median sup error of the empirical transform against the limit, over a ladder of n."""
import argparse

from msle import experiments as ex
from msle.numerics import SeededRng
from msle.stieltjes import STANDARD_GRID


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", default="250,500,1000,2000")
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    rng = SeededRng(args.seed)
    samples = []
    for n in map(int, args.n.split(",")):
        samples += ex.local_law_error(n, args.t, STANDARD_GRID, args.trials, rng, threads=args.threads)
    fit = ex.fit_rate(samples)
    for n, m in zip(fit.n_values, fit.medians):
        print(f"n={n:6d}  median={m:.4e}")
    print(f"slope={fit.slope:.3f} +- {fit.stderr:.3f}")


if __name__ == "__main__":
    main()
