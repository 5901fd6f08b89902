"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with its measured quantities
and wall time, then asserts both the numerical condition and the time budget.
Run just this module with ``pytest tests/test_acceptance.py -v -s``.
"""

import math
import time

import numpy as np
import pytest

from ebpop.baselines import NpmleConfig, TypeMatchIndex, npmle_em, npmle_kkt, oracle_bayes
from ebpop.bench import (
    alpha_fit,
    contraction_diag,
    derive_rng,
    draw_sequence,
    exact_regret,
    gen_dataset,
    length_gen_sweep,
    regret_eval,
)
from ebpop.gaussian import (
    GaussianPrior,
    gaussian_bayes,
    gaussian_bayes_reg,
    gaussian_bayes_tweedie,
    gaussian_marginal,
    inert_rho,
)
from ebpop.hb import hb_estimate, hb_estimate_loo, init_state, lengen_estimate
from ebpop.mixture import (
    DiscretePrior,
    bayes_posterior_mean,
    divergence,
    marginal_pmf,
    mixture_divergence_bounds,
    moment_match,
)
from ebpop.pop import PoPSpec, sample_prior


def random_prior(rng, A=5.0, k=None):
    k = k or int(rng.integers(1, 6))
    return DiscretePrior(rng.uniform(0, A, k), rng.dirichlet(np.ones(k)), A)


def finite_state(comps, train_n=1):
    return init_state(PoPSpec.finite(comps), 0, None, train_n)


@pytest.fixture
def report(capsys):
    """Print one verdict line outside pytest's capture, then assert."""
    start = time.perf_counter()

    def _report(number, title, ok, detail, budget):
        elapsed = time.perf_counter() - start
        within = elapsed < budget
        verdict = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n{verdict} [criterion {number}] {title}: {detail} ({elapsed:.1f}s, budget {budget:.0f}s)")
        assert ok, detail
        assert within, f"took {elapsed:.1f}s, budget {budget}s"

    return _report


def test_criterion_1_identities(report):
    rng = np.random.default_rng(101)
    single = 0.0
    for _ in range(20):
        G = random_prior(rng)
        X = rng.poisson(rng.uniform(0.5, 5), size=int(rng.integers(1, 40)))
        single = max(single, np.max(np.abs(hb_estimate(finite_state([G]), X) - bayes_posterior_mean(G, X))))

    loo = 0.0
    for _ in range(50):
        s = finite_state([random_prior(rng) for _ in range(5)])
        X = rng.poisson(rng.uniform(0.5, 5), size=int(rng.integers(1, 40)))
        loo = max(loo, np.max(np.abs(hb_estimate(s, X) - hb_estimate_loo(s, X))))

    lengen = 0.0
    dup_exact = True
    for _ in range(50):
        n = int(rng.integers(2, 80))
        nt = n * int(rng.integers(1, 5)) + int(rng.integers(0, 7))
        s = finite_state([random_prior(rng) for _ in range(int(rng.integers(2, 6)))], train_n=n)
        X = rng.poisson(rng.uniform(0.5, 5), size=nt)
        lengen = max(lengen, np.max(np.abs(lengen_estimate(s, X) - hb_estimate(s, X, n / nt))))
        dup_exact &= np.array_equal(lengen_estimate(s, np.concatenate([X, X])), np.tile(lengen_estimate(s, X), 2))

    ok = single <= 1e-12 and loo <= 1e-9 and lengen <= 1e-10 and dup_exact
    detail = (f"single-prior max|diff|={single:.2e}, hb-vs-loo={loo:.2e}, "
              f"lengen-vs-alpha={lengen:.2e}, duplication exact={dup_exact}")
    report(1, "identity suite", ok, detail, 10)


def test_criterion_2_alpha_fit(report):
    comps = [DiscretePrior([0.5, 3.0], [0.6, 0.4], 5.0), DiscretePrior([1.5, 4.5], [0.5, 0.5], 5.0)]
    state = finite_state(comps, train_n=50)
    grid = [i / 20 for i in range(1, 21)]
    parts, ok = [], True
    for nt in (100, 200):
        fit = alpha_fit(state, nt, grid, 64, 2)
        target = min(grid, key=lambda a: abs(a - 50 / nt))
        msd_at = dict(fit.curve)[target]
        ok &= fit.alpha_star == target and msd_at <= 1e-16
        parts.append(f"n_test={nt}: alpha*={fit.alpha_star} (want {target}), msd={msd_at:.1e}")
    report(2, "alpha-fit reproduction", ok, "; ".join(parts), 60)


def test_criterion_3_regret_mechanics(report):
    reps, n = 4096, 50
    rng = np.random.default_rng(303)
    G1, G2 = random_prior(rng, 5.0, 3), random_prior(rng, 5.0, 3)

    oracle = regret_eval(lambda X: oracle_bayes(G1, X), G1, n, reps, 1)
    mism = regret_eval(lambda X: oracle_bayes(G2, X), G1, n, reps, 1)
    exact = exact_regret(G2, G1)
    within = abs(mism.mean_regret - exact) <= 3 * mism.stderr

    lines, bayes_ok = [], True
    for m in (2, 5):
        comps = [G1, G2] + [random_prior(rng, 5.0, 3) for _ in range(m - 2)]
        state = finite_state(comps, n)

        def avg(est):
            return np.mean([regret_eval(est, G, n, reps, 7, tag=f"pi{m}").mean_regret for G in comps])

        hb_avg = avg(lambda X: hb_estimate(state, X))
        single = [avg(lambda X, Gj=Gj: oracle_bayes(Gj, X)) for Gj in comps]
        bayes_ok &= hb_avg <= min(single)
        lines.append(f"Pi_{m}: hb={hb_avg:.4g} vs best single={min(single):.4g}")

    ok = oracle.mean_regret == 0.0 and within and bayes_ok
    detail = (f"oracle={oracle.mean_regret}, mismatched MC={mism.mean_regret:.5g}+-{mism.stderr:.2g} "
              f"vs exact={exact:.5g}; " + "; ".join(lines))
    report(3, "regret mechanics", ok, detail, 300)


def test_criterion_4_contraction(report):
    state = init_state(PoPSpec("uniform_dirichlet", 5.0, k=5), 4096, derive_rng(4, "pop_state"))
    G0 = DiscretePrior([1.0, 4.0], [0.5, 0.5], 5.0)
    small, large = contraction_diag(state, G0, [16, 256], 512, 4)
    ok = large.median_h2 < 0.5 * small.median_h2 and large.median_h2 < 0.05
    detail = f"median H2 n=16: {small.median_h2:.4g}, n=256: {large.median_h2:.4g}"
    report(4, "contraction trend", ok, detail, 600)


def test_criterion_5_length_generalisation(report):
    n, n_tests, seeds, reps = 128, [128, 256, 512], 20, 64
    train = PoPSpec("uniform_dirichlet", 10.0, k=10)
    test_pop = PoPSpec("grid_multinomial", 10.0, grid_step=0.1)
    table = np.empty((seeds, len(n_tests)))
    for s in range(seeds):
        state = init_state(train, 4096, derive_rng(s, "pop_state"), n)
        G0 = sample_prior(test_pop, derive_rng(s, "test_prior"))
        table[s] = [r.mean_regret for r in length_gen_sweep(state, G0, n_tests, reps, s)]
    medians = np.median(table, axis=0)
    seed_inversions = int(np.sum(np.any(np.diff(table, axis=1) > 0, axis=1)))
    ok = bool(np.all(np.diff(medians) <= 0)) and seed_inversions <= 1
    detail = (f"median regret at n_test={n_tests}: {np.array2string(medians, precision=4)}, "
              f"seeds with an inversion: {seed_inversions}/{seeds}")
    report(5, "length-generalisation trend", ok, detail, 600)


def test_criterion_6_divergence_bounds(report):
    rng = np.random.default_rng(606)
    tv_ok = chi_ok = True
    for _ in range(500):
        k = int(rng.integers(1, 6))
        A = rng.uniform(0.5, 8)
        G1, G2 = random_prior(rng, A, k), random_prior(rng, A, k)
        tvb, chib = mixture_divergence_bounds(G1, G2)
        f1, f2 = marginal_pmf(G1), marginal_pmf(G2)
        tv_ok &= divergence(f1, f2, "tv") <= tvb + 1e-12
        chi_ok &= divergence(f1, f2, "chi2") <= chib * (1 + 1e-9) + 1e-12

    mm = []
    for L in (8, 12):
        worst = 0.0
        for _ in range(25):
            G = random_prior(rng, 1.0, int(rng.integers(L, 4 * L)))
            worst = max(worst, divergence(marginal_pmf(G), marginal_pmf(moment_match(G, L)), "tv"))
        mm.append((L, worst, (2 * math.e / L) ** L))
    mm_ok = all(w <= b for _, w, b in mm)
    detail = (f"TV bound holds on 500={tv_ok}, chi2 bound holds on 500={chi_ok}; "
              + ", ".join(f"L={L}: max TV {w:.2e} <= {b:.2e}" for L, w, b in mm))
    report(6, "divergence bounds", tv_ok and chi_ok and mm_ok, detail, 60)


def _erm_msd(comps, M, n=4, tests=400):
    spec = PoPSpec.finite(comps)
    state = finite_state(comps, n)
    index = TypeMatchIndex.from_dataset(gen_dataset(spec, n, M, 17))
    rng = derive_rng(17, "erm-test")
    total = 0.0
    for _ in range(tests):
        G = comps[rng.integers(len(comps))]
        _, X = draw_sequence(G, n, rng)
        total += np.mean((index(X) - hb_estimate(state, X)) ** 2)
    return total / tests


def test_criterion_7_baselines(report):
    rng = np.random.default_rng(707)
    monotone = True
    for _ in range(5):
        X = rng.poisson(rng.uniform(0.5, 5.0), size=300)
        ll = np.array(npmle_em(X, NpmleConfig(max_iters=500), 8.0).loglik)
        monotone &= bool(np.all(np.diff(ll) >= -1e-12 * np.abs(ll[1:])))

    G0 = DiscretePrior([1.0, 4.0], [0.5, 0.5], 5.0)
    _, X = draw_sequence(G0, 2000, derive_rng(7, "npmle"))
    # default settings stop on the iteration cap; a longer run stops on the tolerance
    fit = npmle_em(X, NpmleConfig(), 5.0)
    kkt = float(npmle_kkt(fit.prior, X).max())
    tv = divergence(marginal_pmf(fit.prior), marginal_pmf(G0), "tv")
    full = npmle_em(X, NpmleConfig(max_iters=50_000), 5.0)
    kkt_full = float(npmle_kkt(full.prior, X).max())

    comps = [DiscretePrior([0.5, 2.0], [0.5, 0.5], 3.0), DiscretePrior([1.0, 3.0], [0.3, 0.7], 3.0)]
    small, big = _erm_msd(comps, 100), _erm_msd(comps, 10_000)

    ok = monotone and full.converged and max(kkt, kkt_full) <= 1 + 1e-3 and tv <= 0.05 and big < small
    detail = (f"EM monotone={monotone}, max KKT={kkt:.6f} at defaults ({fit.iterations} its), "
              f"{kkt_full:.6f} at tol-convergence ({full.iterations} its), TV={tv:.4f}, "
              f"ERM msd M=1e2: {small:.4g} -> M=1e4: {big:.4g}")
    report(7, "baselines", ok, detail, 180)


def test_criterion_8_gaussian(report):
    rng = np.random.default_rng(808)
    tweedie = 0.0
    for _ in range(100):
        A = rng.uniform(0.5, 5)
        k = int(rng.integers(1, 8))
        G = GaussianPrior(rng.uniform(-A, A, k), rng.dirichlet(np.ones(k)), A)
        x = rng.uniform(-A - 3, A + 3)
        tweedie = max(tweedie, abs(gaussian_bayes(G, x) - gaussian_bayes_tweedie(G, x)))

    rho0 = True
    inert = True
    for _ in range(100):
        A = rng.uniform(0.2, 3)
        n = int(rng.integers(2, 100_000))
        k = int(rng.integers(1, 8))
        G = GaussianPrior(rng.uniform(-A, A, k), rng.dirichlet(np.ones(k)), A)
        edge = A + math.sqrt(2 * math.log(n))
        x = np.append(rng.uniform(-edge, edge, 50), [-edge, edge])
        plain = gaussian_bayes(G, x)
        rho0 &= np.array_equal(gaussian_bayes_reg(G, x, 0.0), plain)
        rho = inert_rho(A, n)
        inert &= bool(np.all(gaussian_marginal(G, x) >= rho)) and np.array_equal(gaussian_bayes_reg(G, x, rho), plain)

    ok = tweedie <= 1e-10 and rho0 and inert
    detail = f"Tweedie-vs-direct max|diff|={tweedie:.2e}, rho=0 equal={rho0}, inert on central range={inert}"
    report(8, "gaussian suite", ok, detail, 30)
