import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebpop.mixture import (
    DegenerateSupportError,
    DiscretePrior,
    TruncatedPmf,
    bayes_posterior_mean,
    bayes_posterior_mean_ratio,
    default_x_max,
    divergence,
    marginal_pmf,
    mixture_divergence_bounds,
    moment_match,
    poisson_chi2,
    poisson_logpmf,
    poisson_tv,
    posterior_moment,
)

from conftest import priors, random_prior


def recursive_pmf(x, lam):
    p = math.exp(-lam)
    for j in range(1, x + 1):
        p *= lam / j
    return p


class TestPoissonLogpmf:
    def test_values(self):
        assert poisson_logpmf(0, 1.0) == pytest.approx(-1.0, abs=1e-15)
        assert poisson_logpmf(0, 0.0) == 0.0
        assert poisson_logpmf(3, 2.0) == pytest.approx(-1.71231792754821907, rel=1e-14)

    def test_zero_rate_sentinel(self):
        assert poisson_logpmf(2, 0.0) == -np.inf

    @pytest.mark.parametrize("lam", [0.3, 2.0, 7.5, 40.0])
    def test_matches_recursion(self, lam):
        xs = np.arange(60)
        ref = np.log([recursive_pmf(int(x), lam) for x in xs])
        np.testing.assert_allclose(poisson_logpmf(xs, lam), ref, rtol=1e-11)


class TestPrior:
    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            DiscretePrior([1.0, 2.0], [0.5, 0.6], 5.0)

    def test_rejects_atoms_outside_support(self):
        with pytest.raises(ValueError):
            DiscretePrior([6.0], [1.0], 5.0)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            DiscretePrior([1.0, 2.0], [1.0], 5.0)


class TestMarginal:
    def test_point_mass(self):
        f = marginal_pmf(DiscretePrior([2.0], [1.0], 5.0))
        assert f.values[1] == pytest.approx(0.270670566473225384, rel=1e-14)

    def test_two_point(self, two_point):
        assert marginal_pmf(two_point).values[0] == pytest.approx(0.208833254769653132, rel=1e-14)

    def test_default_cutoff(self):
        assert default_x_max(50.0) == math.ceil(50 + 20 * math.sqrt(51) + 50)

    @settings(max_examples=50, deadline=None)
    @given(priors(A=20.0))
    def test_normalisation(self, G):
        f = marginal_pmf(G)
        assert abs(f.total - 1.0) <= 1e-9
        assert f.tail_mass_bound < 1e-12

    def test_zero_atom(self):
        f = marginal_pmf(DiscretePrior([0.0], [1.0], 1.0))
        assert f.values[0] == 1.0 and f.values[1:].sum() == 0.0


class TestPosteriorMean:
    def test_point_mass(self):
        G = DiscretePrior([2.5], [1.0], 5.0)
        np.testing.assert_allclose(bayes_posterior_mean(G, np.arange(20)), 2.5, rtol=1e-14)

    def test_two_point(self, two_point):
        assert bayes_posterior_mean(two_point, 0) == pytest.approx(1.23840584404423511, rel=1e-14)
        assert bayes_posterior_mean_ratio(two_point, 0) == pytest.approx(1.23840584404423511, rel=1e-14)

    def test_two_forms_agree(self, rng):
        for _ in range(100):
            G = random_prior(rng, A=10.0)
            x = int(rng.integers(0, 30))
            a, b = bayes_posterior_mean(G, x), bayes_posterior_mean_ratio(G, x)
            assert abs(a - b) <= 1e-10 * abs(a)

    def test_degenerate(self):
        G = DiscretePrior([0.0], [1.0], 1.0)
        assert bayes_posterior_mean(G, 0) == 0.0
        with pytest.raises(DegenerateSupportError):
            bayes_posterior_mean(G, 1)

    @settings(max_examples=100, deadline=None)
    @given(priors(), st.integers(0, 40))
    def test_within_atom_range(self, G, x):
        m = bayes_posterior_mean(G, x)
        assert G.atoms.min() - 1e-12 <= m <= G.atoms.max() + 1e-12


class TestPosteriorMoment:
    def test_first_moment_is_mean(self, two_point):
        xs = np.arange(10)
        np.testing.assert_array_equal(posterior_moment(two_point, xs, 1), bayes_posterior_mean(two_point, xs))

    def test_point_mass(self):
        G = DiscretePrior([1.7], [1.0], 2.0)
        assert posterior_moment(G, 4, 3) == pytest.approx(1.7**3, rel=1e-14)

    def test_two_point_second_moment(self, two_point):
        assert posterior_moment(two_point, 2, 2) == pytest.approx(5.39317551696572942, rel=1e-13)

    @settings(max_examples=100, deadline=None)
    @given(priors(), st.integers(0, 40))
    def test_jensen(self, G, x):
        assert posterior_moment(G, x, 2) >= bayes_posterior_mean(G, x) ** 2 * (1 - 1e-12)


def poisson_pmf(lam, x_max):
    return marginal_pmf(DiscretePrior([lam], [1.0], max(lam, 1e-9) if lam > 0 else 1.0), x_max)


class TestDivergence:
    @pytest.mark.parametrize("kind", ["tv", "h2", "kl", "chi2"])
    def test_self_zero(self, kind, two_point):
        f = marginal_pmf(two_point)
        assert divergence(f, f, kind) == pytest.approx(0.0, abs=1e-14)

    def test_length_mismatch(self, two_point):
        with pytest.raises(ValueError):
            divergence(marginal_pmf(two_point, 10), marginal_pmf(two_point, 11))

    def test_support_mismatch_is_inf(self):
        P = TruncatedPmf([0.5, 0.5], 1)
        Q = TruncatedPmf([1.0, 0.0], 1)
        assert divergence(P, Q, "chi2") == math.inf
        assert divergence(P, Q, "kl") == math.inf
        assert divergence(Q, P, "chi2") == pytest.approx(1.0)

    def test_poisson_tv_coupling_bound(self, rng):
        x_max = 80
        for _ in range(100):
            mu, nu = rng.uniform(0, 5, size=2)
            tv = divergence(poisson_pmf(mu, x_max), poisson_pmf(nu, x_max), "tv")
            assert tv <= 1 - math.exp(-abs(mu - nu)) + 1e-12
            assert poisson_tv(mu, nu) == pytest.approx(tv, abs=1e-12)

    def test_h2_le_2tv(self, rng):
        for _ in range(100):
            P, Q = marginal_pmf(random_prior(rng)), marginal_pmf(random_prior(rng))
            assert divergence(P, Q, "h2") <= 2 * divergence(P, Q, "tv") + 1e-12

    def test_poisson_chi2_closed_form(self):
        lam, ref = 2.0, 3.0
        direct = divergence(poisson_pmf(lam, 120), poisson_pmf(ref, 120), "chi2")
        assert poisson_chi2(lam, ref) == pytest.approx(direct, rel=1e-10)

    def test_poisson_chi2_overflow_is_inf(self):
        assert poisson_chi2(8.0, 0.01) == math.inf


class TestMixtureBounds:
    def test_identical(self, two_point):
        assert mixture_divergence_bounds(two_point, two_point) == (0.0, 0.0)

    def test_mismatch(self, two_point):
        with pytest.raises(ValueError):
            mixture_divergence_bounds(two_point, DiscretePrior([1.0], [1.0], 5.0))

    def test_zero_reference_rate(self):
        G1 = DiscretePrior([1.0, 2.0], [0.5, 0.5], 5.0)
        G2 = DiscretePrior([0.0, 2.0], [0.5, 0.5], 5.0)
        assert mixture_divergence_bounds(G1, G2)[1] == math.inf

    def test_dominates(self, rng):
        for _ in range(100):
            k = int(rng.integers(1, 5))
            G1, G2 = random_prior(rng, 3.0, k), random_prior(rng, 3.0, k)
            tvb, chib = mixture_divergence_bounds(G1, G2)
            f1, f2 = marginal_pmf(G1), marginal_pmf(G2)
            assert divergence(f1, f2, "tv") <= tvb + 1e-12
            assert divergence(f1, f2, "chi2") <= chib * (1 + 1e-9) + 1e-12


class TestMomentMatch:
    def test_small_prior_unchanged(self, two_point):
        assert moment_match(two_point, 4) is two_point

    def test_grid_prior(self):
        G = DiscretePrior(np.arange(1, 9) * 0.5, np.full(8, 1 / 8), 4.0)
        H = moment_match(G, 8)
        assert H.size <= math.ceil(9 / 2) + 1
        np.testing.assert_allclose(H.moments(8)[1:], G.moments(8)[1:], rtol=1e-8)

    @pytest.mark.parametrize("L", [8, 12])
    def test_tv_bound(self, rng, L):
        A = 1.0
        for _ in range(20):
            G = random_prior(rng, A, k=int(rng.integers(L, 3 * L)))
            H = moment_match(G, L)
            np.testing.assert_allclose(H.moments(L), G.moments(L), rtol=1e-8, atol=1e-14)
            tv = divergence(marginal_pmf(G), marginal_pmf(H), "tv")
            assert tv <= (2 * math.e * A / L) ** L

    def test_atoms_in_support(self, rng):
        G = random_prior(rng, 5.0, k=30)
        H = moment_match(G, 9)
        assert H.atoms.min() >= 0 and H.atoms.max() <= 5.0
