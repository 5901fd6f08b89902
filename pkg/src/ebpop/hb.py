"""Hierarchical Bayes estimation under a prior on priors.

A PoP is represented by a finite candidate set ``{G_j}`` with log-weights.
For a FINITE PoP this is exact; otherwise the candidates are i.i.d. draws and
the weights are self-normalised Monte-Carlo weights.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mixture import POISSON, bayes_posterior_mean_ratio, posterior_moment_array
from .pop import PoPKind, PoPSpec, sample_prior


class ZeroLikelihoodError(ValueError):
    """Every candidate prior assigns zero probability to the data."""


def _stack(priors) -> tuple[np.ndarray, np.ndarray]:
    K = max(G.size for G in priors)
    atoms = np.zeros((len(priors), K))
    logw = np.full((len(priors), K), -np.inf)
    for j, G in enumerate(priors):
        atoms[j, : G.size] = G.atoms
        logw[j, : G.size] = G.log_weights
    return atoms, logw


@dataclass(frozen=True, eq=False)
class PosteriorState:
    priors: tuple
    log_weights: np.ndarray
    alpha: float = 1.0
    train_n: int = 1
    model: object = POISSON
    stacked: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(self.priors))
        lw = np.asarray(self.log_weights, dtype=float)
        if not self.priors or lw.shape != (len(self.priors),):
            raise ValueError("need one log-weight per candidate prior")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.train_n < 1:
            raise ValueError("train_n must be positive")
        object.__setattr__(self, "log_weights", lw - logsumexp(lw))
        if self.stacked is None:
            object.__setattr__(self, "stacked", _stack(self.priors))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def A(self) -> float:
        return max(G.support_bound for G in self.priors)

    def with_log_weights(self, log_weights, alpha=None) -> "PosteriorState":
        return dataclasses.replace(
            self, log_weights=log_weights, alpha=self.alpha if alpha is None else alpha
        )


def init_state(
    spec: PoPSpec,
    mc_draws: int,
    rng: np.random.Generator,
    train_n: int = 1,
    model=POISSON,
    exact_finite: bool = True,
) -> PosteriorState:
    """Finite representation of the PoP.

    FINITE specs keep their components with uniform weights; other specs (or
    FINITE with ``exact_finite=False``) are replaced by ``mc_draws`` i.i.d. draws.
    """
    if spec.kind is PoPKind.FINITE and exact_finite:
        priors = spec.components
    else:
        if mc_draws < 1:
            raise ValueError("mc_draws must be >= 1")
        priors = [sample_prior(spec, rng, model) for _ in range(mc_draws)]
    return PosteriorState(priors, np.zeros(len(priors)), 1.0, train_n, model)


def candidate_tables(state: PosteriorState, values) -> tuple[np.ndarray, np.ndarray]:
    """``log f_{G_j}(u)`` and ``theta_{G_j}(u)`` for each candidate and value, shape (J, U)."""
    atoms, logw = state.stacked
    u = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lj = logw[:, :, None] + state.model.log_kernel(u[None, None, :], atoms[:, :, None])
        # hand-rolled log-sum-exp over atoms; reuses the shifted exponentials for theta
        top = lj.max(axis=1)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.exp(lj - top[:, None, :])
        s = e.sum(axis=1)
        lf = np.log(s) + top
        theta = np.einsum("jku,jk->ju", e, atoms) / s
    theta[s == 0] = 0.0
    return lf, theta


def _types(X):
    X = np.asarray(X)
    if X.ndim != 1 or X.size == 0:
        raise ValueError("X must be a nonempty 1-d sequence")
    return np.unique(X, return_inverse=True, return_counts=True)


def _normalise(log_w: np.ndarray) -> np.ndarray:
    top = np.max(log_w)
    if np.isneginf(top):
        raise ZeroLikelihoodError("all candidate priors have zero likelihood")
    return log_w - logsumexp(log_w)


def log_likelihoods(state: PosteriorState, X) -> np.ndarray:
    """``sum_i log f_{G_j}(X_i)`` for every candidate."""
    u, _, counts = _types(X)
    lf, _ = candidate_tables(state, u)
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(lf), -np.inf, lf * 1.0) @ counts.astype(float)


def posterior_update(state: PosteriorState, X, alpha: float = 1.0) -> PosteriorState:
    """alpha-posterior: log-weights += alpha * log-likelihood, then renormalised."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    new = _normalise(state.log_weights + alpha * log_likelihoods(state, X))
    return state.with_log_weights(new, alpha)


def posterior_mean(state: PosteriorState, X) -> np.ndarray:
    """``sum_j p_j theta_{G_j}(X_i)`` with the state's current weights."""
    u, inv, _ = _types(X)
    _, theta = candidate_tables(state, u)
    return (state.weights @ theta)[inv]


def hb_estimate(state: PosteriorState, X, alpha: float = 1.0) -> np.ndarray:
    """Hierarchical Bayes estimate of every coordinate, treating ``state`` as the PoP."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    u, inv, counts = _types(X)
    lf, theta = candidate_tables(state, u)
    with np.errstate(invalid="ignore"):
        ll = np.where(np.isneginf(lf), -np.inf, lf * 1.0) @ counts.astype(float)
    lw = _normalise(state.log_weights + alpha * ll)
    return (np.exp(lw) @ theta)[inv]


def hb_estimate_loo(state: PosteriorState, X, alpha: float = 1.0) -> np.ndarray:
    """Coordinatewise Bayes rule under the leave-one-out mean prior.

    At ``alpha = 1`` this pools ``E[G | X without i]`` into a single prior and
    applies its one-dimensional Bayes rule; for other ``alpha`` it evaluates
    ``E[theta_G f_G^alpha] / E[f_G^alpha]`` under the leave-one-out alpha-posterior.
    """
    u, inv, counts = _types(X)
    lf, theta = candidate_tables(state, u)
    finite_lf = np.where(np.isneginf(lf), -np.inf, lf)
    atoms, logw = state.stacked
    out = np.empty(u.size)
    for s in range(u.size):
        rest = counts.astype(float)
        rest[s] -= 1
        with np.errstate(invalid="ignore"):
            ll = np.where(rest[None, :] > 0, finite_lf, 0.0) @ rest
        lp = _normalise(state.log_weights + alpha * ll)
        if alpha == 1.0:
            pooled_logw = (lp[:, None] + logw).ravel()
            keep = np.isfinite(pooled_logw)
            w = np.exp(pooled_logw[keep] - logsumexp(pooled_logw[keep]))
            G_i = state.model.prior_cls(atoms.ravel()[keep], w / w.sum(), state.A)
            if state.model is POISSON:
                out[s] = bayes_posterior_mean_ratio(G_i, float(u[s]))
            else:
                out[s] = posterior_moment_array(G_i, u[s], 1, state.model)[0]
        else:
            lq = lp + alpha * lf[:, s]
            q = np.exp(lq - logsumexp(lq))
            out[s] = q @ theta[:, s]
    return out[inv]


def _lengen_log_weights(state: PosteriorState, lf: np.ndarray, counts: np.ndarray) -> np.ndarray:
    mu = counts / counts.sum()
    with np.errstate(invalid="ignore"):
        ll = np.where(np.isneginf(lf), -np.inf, lf) @ mu
    return _normalise(state.log_weights + state.train_n * ll)


def lengen_weights(state: PosteriorState, X) -> np.ndarray:
    """Posterior log-weights ``log Pi(G) + n * sum_x mu(x) log f_G(x)`` with ``mu`` the type of X."""
    u, _, counts = _types(X)
    lf, _ = candidate_tables(state, u)
    return _lengen_log_weights(state, lf, counts)


def lengen_estimate(state: PosteriorState, X) -> np.ndarray:
    """The length-``train_n`` HB map applied to a sequence of any length.

    Depends on X only through each value and its empirical distribution, so
    it equals the alpha-posterior HB estimate with ``alpha = train_n / len(X)``.
    """
    u, inv, counts = _types(X)
    lf, theta = candidate_tables(state, u)
    return (np.exp(_lengen_log_weights(state, lf, counts)) @ theta)[inv]


def predictive_log_pmf(state: PosteriorState, values) -> np.ndarray:
    """``log sum_j p_j f_{G_j}(x)``: the posterior predictive of the next observation."""
    lf, _ = candidate_tables(state, np.asarray(values))
    return logsumexp(state.log_weights[:, None] + lf, axis=0)
