"""Comparison estimators: oracle Bayes, Robbins, grid NPMLE and type-matching ERM."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mixture import DiscretePrior, bayes_posterior_mean, poisson_logpmf


def oracle_bayes(G0: DiscretePrior, X) -> np.ndarray:
    return bayes_posterior_mean(G0, np.asarray(X, dtype=float))


def robbins(X, clip_bound: float | None = None) -> np.ndarray:
    """``(x + 1) N(x + 1) / max(N(x), 1)`` with ``N`` the count of each value, clipped."""
    X = np.asarray(X, dtype=np.int64)
    counts = np.bincount(X, minlength=X.max() + 2)
    out = (X + 1) * counts[X + 1] / np.maximum(counts[X], 1)
    if clip_bound is None:
        clip_bound = X.max() + 1
    return np.clip(out.astype(float), 0.0, clip_bound)


@dataclass(frozen=True)
class NpmleConfig:
    grid_step: float | None = None  # None -> 0.025 * A
    max_iters: int = 2000
    tol: float = 1e-9

    def __post_init__(self):
        if self.grid_step is not None and not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if self.max_iters < 1 or not self.tol > 0:
            raise ValueError("max_iters >= 1 and tol > 0 required")

    def grid(self, A: float) -> np.ndarray:
        step = 0.025 * A if self.grid_step is None else self.grid_step
        if step > A:
            raise ValueError("grid_step must not exceed A")
        count = int(np.floor(A / step + 1e-9))
        return np.minimum(step * np.arange(count + 1), A)


@dataclass
class NpmleFit:
    prior: DiscretePrior
    loglik: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def npmle_em(X, cfg: NpmleConfig, A: float) -> NpmleFit:
    """Fixed-grid EM for the Poisson NPMLE, recording the log-likelihood per iterate."""
    X = np.asarray(X)
    if X.size == 0:
        raise ValueError("X must be nonempty")
    grid = cfg.grid(A)
    u, c = np.unique(X, return_counts=True)
    n = X.size
    logP = poisson_logpmf(u[:, None].astype(float), grid[None, :])
    w = np.full(grid.size, 1.0 / grid.size)
    with np.errstate(divide="ignore"):
        logf = logsumexp(logP + np.log(w), axis=1)
    trace = [float(c @ logf)]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        w = w * (c @ np.exp(logP - logf[:, None])) / n
        w /= w.sum()
        with np.errstate(divide="ignore"):
            logf = logsumexp(logP + np.log(w), axis=1)
        trace.append(float(c @ logf))
        if trace[-1] - trace[-2] <= cfg.tol * max(abs(trace[-2]), 1.0):
            converged = True
            break
    return NpmleFit(DiscretePrior(grid, w, A), trace, it, converged)


def npmle_grid(X, cfg: NpmleConfig, A: float) -> DiscretePrior:
    return npmle_em(X, cfg, A).prior


def npmle_kkt(G: DiscretePrior, X) -> np.ndarray:
    """``(1/n) sum_i Poi(X_i; lam) / f_G(X_i)`` at every atom of G; <= 1 at the NPMLE."""
    u, c = np.unique(np.asarray(X), return_counts=True)
    logP = poisson_logpmf(u[:, None].astype(float), G.atoms[None, :])
    with np.errstate(divide="ignore"):
        logf = logsumexp(logP + G.log_weights, axis=1)
    return (c @ np.exp(logP - logf[:, None])) / c.sum()


def npmle_estimator(X, cfg: NpmleConfig, A: float) -> np.ndarray:
    return bayes_posterior_mean(npmle_grid(X, cfg, A), np.asarray(X, dtype=float))


def _type_key(x: np.ndarray) -> bytes:
    return np.sort(x).astype(np.int64).tobytes()


class TypeMatchIndex:
    """Training batches grouped by the multiset of their observations."""

    def __init__(self, theta: np.ndarray, x: np.ndarray, A: float):
        self.theta = np.asarray(theta, dtype=float)
        self.x = np.asarray(x)
        if self.theta.shape != self.x.shape or self.x.ndim != 2:
            raise ValueError("theta and x must both be (M, n) arrays")
        self.A = float(A)
        self.fallback = float(self.theta.mean())
        groups = defaultdict(list)
        for m, row in enumerate(self.x):
            groups[_type_key(row)].append(m)
        self.groups = dict(groups)

    @classmethod
    def from_dataset(cls, data) -> "TypeMatchIndex":
        return cls(data.theta, data.x, data.pop.A)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.shape != (self.x.shape[1],):
            raise ValueError(f"expected a length-{self.x.shape[1]} sequence, got {X.shape}")
        matches = self.groups.get(_type_key(X))
        if not matches:
            return np.full(X.size, self.fallback)
        target = np.argsort(X, kind="stable")
        acc = np.zeros(X.size)
        for m in matches:
            src = np.argsort(self.x[m], kind="stable")
            acc[target] += self.theta[m, src]
        # averaging over every aligning permutation spreads theta evenly across ties
        _, inv, counts = np.unique(X, return_inverse=True, return_counts=True)
        acc = (np.bincount(inv, weights=acc) / counts)[inv]
        return np.clip(acc / len(matches), 0.0, self.A)


def erm_type_match(train, X, index: TypeMatchIndex | None = None) -> np.ndarray:
    """Permutation-invariant ERM minimiser over the training batches.

    Averages the aligned ``theta`` of every batch whose observations are a
    permutation of X, over all aligning permutations (so tied observations
    share one value); falls back to the pooled training mean otherwise.
    """
    if index is None:
        index = TypeMatchIndex.from_dataset(train)
    return index(X)
