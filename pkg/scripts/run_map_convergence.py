"""Flow-map convergence: sup |g_N - g_inf| over a region above the hull, against n."""
import argparse

from msle import experiments as ex
from msle.loewner import HullBox, region_g
from msle.numerics import SeededRng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", default="64,128,256,512,1024")
    ap.add_argument("--T", type=float, default=0.2)
    ap.add_argument("--margin", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    region = region_g(HullBox(0.0, args.T), args.margin, 1.5, (13, 6), im_max=2.5)
    rng = SeededRng(args.seed)
    samples = []
    for n in map(int, args.n.split(",")):
        samples += ex.map_convergence_error(n, args.T, region, args.trials, rng, threads=args.threads)
    fit = ex.fit_rate(samples)
    for n, m in zip(fit.n_values, fit.medians):
        print(f"n={n:6d}  median={m:.4e}")
    swallowed = sum(s.excluded for s in samples) / (len(samples) * region.grid.size)
    print(f"slope={fit.slope:.3f} +- {fit.stderr:.3f}  swallowed={swallowed:.4f}")


if __name__ == "__main__":
    main()
