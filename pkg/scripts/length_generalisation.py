"""Regret of HB trained at one length and applied to longer test sequences.

For each seed a fresh Monte-Carlo representation of the training PoP and a
fresh test prior are drawn; the table reports the median over seeds of the
mean regret at each test length, for the length-generalised HB map, HB
re-run at the test length, and the grid NPMLE plug-in rule.

    python3 scripts/length_generalisation.py --seeds 20 --reps 64
"""

import argparse

import numpy as np

from ebpop.baselines import NpmleConfig, npmle_estimator
from ebpop.bench import derive_rng, length_gen_sweep, regret_eval
from ebpop.hb import hb_estimate, init_state
from ebpop.pop import PoPSpec, sample_prior


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--A", type=float, default=10.0)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--n-test", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--test-pop", choices=["grid_multinomial", "neural"], default="grid_multinomial")
    ap.add_argument("--mc-draws", type=int, default=4096)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--reps", type=int, default=64)
    ap.add_argument("--no-npmle", action="store_true")
    args = ap.parse_args()

    train = PoPSpec("uniform_dirichlet", args.A, k=args.k)
    test = PoPSpec(args.test_pop, args.A)
    names = ["hb_lengen", "hb_at_n_test"] + ([] if args.no_npmle else ["npmle"])
    table = {name: np.empty((args.seeds, len(args.n_test))) for name in names}
    for s in range(args.seeds):
        base = init_state(train, args.mc_draws, derive_rng(s, "pop_state"), args.n)
        G0 = sample_prior(test, derive_rng(s, "test_prior"))
        table["hb_lengen"][s] = [r.mean_regret for r in length_gen_sweep(base, G0, args.n_test, args.reps, s)]
        for j, nt in enumerate(args.n_test):
            # same tag as the sweep, so every estimator sees identical data
            kw = dict(tag=f"lengen/{nt}")
            table["hb_at_n_test"][s, j] = regret_eval(lambda X: hb_estimate(base, X), G0, nt, args.reps, s, **kw).mean_regret
            if "npmle" in table:
                est = lambda X: npmle_estimator(X, NpmleConfig(), args.A)  # noqa: E731
                table["npmle"][s, j] = regret_eval(est, G0, nt, args.reps, s, **kw).mean_regret
        print(f"seed {s}: " + ", ".join(f"{k}={v[s].round(4).tolist()}" for k, v in table.items()), flush=True)

    print("\nmedian regret over seeds")
    print("estimator".ljust(14) + "".join(f"n_test={nt}".rjust(14) for nt in args.n_test))
    for name, vals in table.items():
        print(name.ljust(14) + "".join(f"{v:14.5f}" for v in np.median(vals, axis=0)))


if __name__ == "__main__":
    main()
