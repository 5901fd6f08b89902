"""Mean squared distance between the length-generalised HB map and alpha-posterior HB.

Prints one curve per (n, n_test) pair under a finite m-prior PoP; each curve
should bottom out at alpha = n / n_test.

    python3 scripts/alpha_posterior.py --m 2 --n 25 50 --ratio 1 2 4 8
"""

import argparse

import numpy as np

from ebpop.bench import alpha_fit
from ebpop.hb import init_state
from ebpop.mixture import DiscretePrior
from ebpop.pop import PoPSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--A", type=float, default=5.0)
    ap.add_argument("--n", type=int, nargs="+", default=[25, 50])
    ap.add_argument("--ratio", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--reps", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    comps = [DiscretePrior(rng.uniform(0, args.A, 3), rng.dirichlet(np.ones(3)), args.A) for _ in range(args.m)]
    grid = sorted({1.0 / r for r in args.ratio} | {i / 16 for i in range(1, 17)})
    print("n".rjust(5) + "n_test".rjust(8) + "alpha*".rjust(10) + "  msd at grid " + " ".join(f"{a:.3g}" for a in grid))
    for n in args.n:
        state = init_state(PoPSpec.finite(comps), 0, None, n)
        for r in args.ratio:
            fit = alpha_fit(state, n * r, grid, args.reps, args.seed)
            msd = " ".join(f"{m:.1e}" for _, m in fit.curve)
            print(f"{n:5d}{n * r:8d}{fit.alpha_star:10.4g}  {msd}")


if __name__ == "__main__":
    main()
