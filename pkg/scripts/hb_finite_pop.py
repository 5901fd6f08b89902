"""Regret of HB under a finite m-prior PoP against single-prior Bayes rules and baselines.

For each m, components are drawn once; the reported number is the regret
averaged over G0 ranging through the components (the Bayes risk of the PoP).

    python3 scripts/hb_finite_pop.py --m 2 5 10 --n 50 --reps 512
"""

import argparse

import numpy as np

from ebpop.baselines import NpmleConfig, npmle_estimator, oracle_bayes, robbins
from ebpop.bench import regret_eval
from ebpop.hb import hb_estimate, init_state
from ebpop.mixture import DiscretePrior
from ebpop.pop import PoPSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, nargs="+", default=[2, 5, 10])
    ap.add_argument("--A", type=float, default=5.0)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--reps", type=int, default=512)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print("m".rjust(4) + "hb".rjust(12) + "best_single".rjust(14) + "npmle".rjust(12) + "robbins".rjust(12))
    for m in args.m:
        comps = [DiscretePrior(rng.uniform(0, args.A, 3), rng.dirichlet(np.ones(3)), args.A) for _ in range(m)]
        state = init_state(PoPSpec.finite(comps), 0, None, args.n)

        def avg(est, tag=f"m{m}"):
            return np.mean([regret_eval(est, G, args.n, args.reps, args.seed, tag=tag).mean_regret for G in comps])

        hb = avg(lambda X: hb_estimate(state, X))
        single = min(avg(lambda X, G=G: oracle_bayes(G, X)) for G in comps)
        npmle = avg(lambda X: npmle_estimator(X, NpmleConfig(), args.A))
        rob = avg(lambda X: robbins(X, args.A))
        print(f"{m:4d}{hb:12.5f}{single:14.5f}{npmle:12.5f}{rob:12.5f}", flush=True)


if __name__ == "__main__":
    main()
