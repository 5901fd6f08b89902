"""Normal-means counterpart: ``X | theta ~ N(theta, 1)`` with priors on [-A, A]."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .bench import regret_eval
from .mixture import _AtomicPrior, posterior_moment_array

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussianPrior(_AtomicPrior):
    atoms: np.ndarray
    weights: np.ndarray
    support_bound: float

    def _lower(self) -> float:
        return -self.support_bound

    def __post_init__(self):
        self._validate()

    def reflect(self) -> "GaussianPrior":
        return GaussianPrior(-self.atoms[::-1], self.weights[::-1], self.support_bound)


def normal_logpdf(z):
    return -0.5 * np.square(z) - LOG_SQRT_2PI


class GaussianModel:
    name = "gaussian"
    discrete = False
    prior_cls = GaussianPrior

    @staticmethod
    def lower(A: float) -> float:
        return -A

    @staticmethod
    def log_kernel(x, atoms):
        return normal_logpdf(np.asarray(x, dtype=float) - atoms)

    @staticmethod
    def sample(rng: np.random.Generator, theta: np.ndarray) -> np.ndarray:
        return theta + rng.standard_normal(np.shape(theta))

    @staticmethod
    def x_max(A: float) -> int:
        raise TypeError("the normal-means model has no truncation grid")


GAUSSIAN = GaussianModel()


def _log_terms(G: GaussianPrior, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        return x, G.log_weights[:, None] + normal_logpdf(x[None, :] - G.atoms[:, None])


def _shape_like(x, out):
    return out if np.ndim(x) else float(out[0])


def gaussian_marginal(G: GaussianPrior, x):
    """``f_G(x) = sum_j w_j phi(x - lambda_j)``."""
    _, lt = _log_terms(G, x)
    return _shape_like(x, np.exp(logsumexp(lt, axis=0)))


def gaussian_marginal_derivative(G: GaussianPrior, x):
    """Analytic ``f_G'(x) = sum_j w_j (lambda_j - x) phi(x - lambda_j)``."""
    xa, lt = _log_terms(G, x)
    return _shape_like(x, np.sum(np.exp(lt) * (G.atoms[:, None] - xa[None, :]), axis=0))


def gaussian_bayes(G: GaussianPrior, x):
    """Posterior mean by the direct atom sum."""
    return _shape_like(x, posterior_moment_array(G, x, 1, GAUSSIAN))


def gaussian_bayes_tweedie(G: GaussianPrior, x):
    """Posterior mean as ``x + f_G'(x) / f_G(x)``."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    return _shape_like(x, xa + gaussian_marginal_derivative(G, xa) / gaussian_marginal(G, xa))


def gaussian_bayes_reg(G: GaussianPrior, x, rho: float):
    """Regularised Bayes rule ``x + f_G'(x) / max(f_G(x), rho)``; ``rho = 0`` is the plain rule."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return gaussian_bayes(G, x)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    f = gaussian_marginal(G, xa)
    out = np.where(
        f >= rho,
        posterior_moment_array(G, xa, 1, GAUSSIAN),
        xa + gaussian_marginal_derivative(G, xa) / np.maximum(f, rho),
    )
    return _shape_like(x, out)


def inert_rho(A: float, n: int) -> float:
    """``e^{-4A^2} / (n^2 sqrt(2 pi))``: below this the regularisation never binds on
    ``|x| <= A + sqrt(2 log n)``."""
    return math.exp(-4.0 * A * A) / (n * n * math.sqrt(2.0 * math.pi))


def gaussian_regret_eval(estimator, G0: GaussianPrior, n: int, reps: int, seed: int, **kw):
    return regret_eval(estimator, G0, n, reps, seed, model=GAUSSIAN, **kw)
