"""Poisson mixtures over discrete priors.

Everything that touches a probability goes through log space; pmfs are only
exponentiated when handed back to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp, xlogy

WEIGHT_TOL = 1e-12


class DegenerateSupportError(ValueError):
    """The marginal density vanishes at the requested observation."""


class _AtomicPrior:
    """Shared validation for finitely supported priors."""

    atoms: np.ndarray
    weights: np.ndarray
    support_bound: float

    def _lower(self) -> float:
        return 0.0

    def _validate(self) -> None:
        atoms = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "support_bound", float(self.support_bound))
        if atoms.ndim != 1 or atoms.shape != weights.shape or atoms.size == 0:
            raise ValueError("atoms and weights must be nonempty 1-d arrays of equal length")
        if not self.support_bound > 0:
            raise ValueError("support_bound must be positive")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must lie on the simplex (sum={weights.sum()!r})")
        if np.any(atoms < self._lower()) or np.any(atoms > self.support_bound):
            raise ValueError(
                f"atoms must lie in [{self._lower()}, {self.support_bound}]"
            )

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    @property
    def size(self) -> int:
        return self.atoms.size

    def moments(self, order: int) -> np.ndarray:
        """Raw moments 0..order."""
        powers = np.arange(order + 1)
        return (self.weights[:, None] * self.atoms[:, None] ** powers).sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "atoms": [float(a) for a in self.atoms],
            "weights": [float(w) for w in self.weights],
            "support_bound": self.support_bound,
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls(d["atoms"], d["weights"], d["support_bound"])

    @classmethod
    def from_unnormalized(cls, atoms, weights, support_bound):
        w = np.asarray(weights, dtype=float)
        return cls(atoms, w / w.sum(), support_bound)

    @classmethod
    def point_mass(cls, atom: float, support_bound: float):
        return cls([atom], [1.0], support_bound)

    def __eq__(self, other) -> bool:
        return (
            type(self) is type(other)
            and self.support_bound == other.support_bound
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DiscretePrior(_AtomicPrior):
    """``G = sum_j w_j delta_{lambda_j}`` on ``[0, support_bound]``."""

    atoms: np.ndarray
    weights: np.ndarray
    support_bound: float

    def __post_init__(self):
        self._validate()


@dataclass(frozen=True)
class TruncatedPmf:
    values: np.ndarray
    x_max: int
    tail_mass_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (self.x_max + 1,):
            raise ValueError("values must cover 0..x_max")
        if np.any(self.values < 0):
            raise ValueError("pmf values must be nonnegative")

    @property
    def total(self) -> float:
        return float(self.values.sum() + self.tail_mass_bound)


def default_x_max(A: float) -> int:
    """Cutoff with Poisson tail below 1e-12 for every rate <= A."""
    return int(math.ceil(A + 20.0 * math.sqrt(A + 1.0) + 50.0))


def poisson_logpmf(x, lam):
    """log Poi(x; lam); ``Poi(.; 0)`` is the point mass at 0 (``-inf`` elsewhere)."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    out = xlogy(x, lam) - lam - gammaln(x + 1.0)
    return out if out.ndim else float(out)


class PoissonModel:
    """Observation model ``X | theta ~ Poi(theta)``.

    The hierarchical Bayes and benchmark code only talk to priors through
    this small interface, which the normal-means model mirrors.
    """

    name = "poisson"
    discrete = True
    prior_cls = DiscretePrior

    @staticmethod
    def lower(A: float) -> float:
        return 0.0

    @staticmethod
    def log_kernel(x, atoms):
        return poisson_logpmf(x, atoms)

    @staticmethod
    def sample(rng: np.random.Generator, theta: np.ndarray) -> np.ndarray:
        return rng.poisson(theta)

    @staticmethod
    def x_max(A: float) -> int:
        return default_x_max(A)


POISSON = PoissonModel()


def _log_joint(model, atoms, log_w, x):
    """log w_k + log p(x | atom_k), broadcast as ``(..., K, U)``."""
    x = np.asarray(x, dtype=float)
    return log_w[..., None] + model.log_kernel(x, atoms[..., None])


def log_marginal(G, x, model=POISSON) -> np.ndarray:
    """``log f_G(x)`` for an array of observations."""
    with np.errstate(divide="ignore"):
        return logsumexp(_log_joint(model, G.atoms, G.log_weights, np.atleast_1d(x)), axis=-2)


def posterior_moment_array(G, x, p: int = 1, model=POISSON) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        lj = _log_joint(model, G.atoms, G.log_weights, x)
        lf = logsumexp(lj, axis=-2)
    if np.any(np.isneginf(lf)):
        bad = x[np.isneginf(lf)][0]
        raise DegenerateSupportError(f"f_G({bad:g}) = 0")
    post = np.exp(lj - lf)
    return (post * (G.atoms[:, None] ** p)).sum(axis=0)


def marginal_pmf(G: DiscretePrior, x_max: int | None = None) -> TruncatedPmf:
    if x_max is None:
        x_max = default_x_max(G.support_bound)
    lf = log_marginal(G, np.arange(x_max + 1))
    tail = float(np.dot(G.weights, stats.poisson.sf(x_max, G.atoms)))
    return TruncatedPmf(np.exp(lf), x_max, tail)


def bayes_posterior_mean(G: DiscretePrior, x):
    """Posterior mean ``E_G[theta | X = x]`` via the direct atom sum."""
    out = posterior_moment_array(G, x, 1)
    return out if np.ndim(x) else float(out[0])


def bayes_posterior_mean_ratio(G: DiscretePrior, x):
    """Posterior mean via ``(x + 1) f_G(x + 1) / f_G(x)``."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    lf = log_marginal(G, xa)
    if np.any(np.isneginf(lf)):
        raise DegenerateSupportError(f"f_G({xa[np.isneginf(lf)][0]:g}) = 0")
    out = (xa + 1.0) * np.exp(log_marginal(G, xa + 1.0) - lf)
    return out if np.ndim(x) else float(out[0])


def posterior_moment(G: DiscretePrior, x, p: int):
    if p < 1:
        raise ValueError("p must be a positive integer")
    out = posterior_moment_array(G, x, p)
    return out if np.ndim(x) else float(out[0])


class Divergence(str, Enum):
    TV = "tv"
    H2 = "h2"
    KL = "kl"
    CHI2 = "chi2"


def _pmf_values(P) -> np.ndarray:
    return P.values if isinstance(P, TruncatedPmf) else np.asarray(P, dtype=float)


def divergence(P, Q, kind="tv") -> float:
    """Discrete divergences on the common support ``0..x_max``.

    ``kind`` is one of tv, h2 (squared Hellinger without the 1/2), kl, chi2.
    """
    p, q = _pmf_values(P), _pmf_values(Q)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    kind = Divergence(kind)
    if kind is Divergence.TV:
        return 0.5 * float(np.abs(p - q).sum())
    if kind is Divergence.H2:
        return float(((np.sqrt(p) - np.sqrt(q)) ** 2).sum())
    pos = p > 0
    if np.any(pos & (q <= 0)):
        return math.inf
    p, q = p[pos], q[pos]
    if kind is Divergence.KL:
        return float(np.sum(p * (np.log(p) - np.log(q))))
    return float(np.sum(np.exp(2.0 * np.log(p) - np.log(q))) - 1.0)


def poisson_tv(mu: float, nu: float) -> float:
    """Exact TV between two Poisson laws via the likelihood-ratio crossing."""
    lo, hi = sorted((float(mu), float(nu)))
    if lo == hi:
        return 0.0
    if lo == 0.0:
        return 1.0 - math.exp(-hi)
    # Poi(lo) dominates exactly on {x <= cross}
    cross = math.floor((hi - lo) / (math.log(hi) - math.log(lo)))
    return float(stats.poisson.cdf(cross, lo) - stats.poisson.cdf(cross, hi))


def poisson_chi2(lam: float, lam_ref: float) -> float:
    """``chi^2(Poi(lam) || Poi(lam_ref)) = exp((lam - lam_ref)^2 / lam_ref) - 1``."""
    if lam_ref == 0.0:
        return 0.0 if lam == 0.0 else math.inf
    try:
        return math.expm1((lam - lam_ref) ** 2 / lam_ref)
    except OverflowError:
        return math.inf


def mixture_divergence_bounds(G1: DiscretePrior, G2: DiscretePrior) -> tuple[float, float]:
    """Index-paired TV and chi^2 upper bounds between two Poisson mixtures."""
    if G1.size != G2.size:
        raise ValueError(f"atom count mismatch: {G1.size} vs {G2.size}")
    w, w2 = G1.weights, G2.weights
    tv = float(np.abs(w - w2).sum()) + max(
        poisson_tv(a, b) for a, b in zip(G1.atoms, G2.atoms)
    )
    if np.any((w2 == 0) & (w > 0)):
        return tv, math.inf
    pos = w > 0
    chi_w = float(np.sum(w[pos] ** 2 / w2[pos]) - 1.0)
    chi_poi = max(poisson_chi2(a, b) for a, b in zip(G1.atoms, G2.atoms))
    if math.isinf(chi_poi):
        return tv, math.inf
    return tv, (1.0 + chi_w) * (1.0 + chi_poi) - 1.0


def _lanczos_jacobi(atoms: np.ndarray, weights: np.ndarray, m: int, rel_tol: float = 1e-10):
    """Jacobi matrix of the discrete measure, with full reorthogonalization.

    Returns ``(alpha, beta)`` for up to ``m`` steps; stops early when the Krylov
    space is exhausted.
    """
    scale = max(float(np.max(np.abs(atoms))), 1.0)
    q = np.sqrt(weights)
    Q = [q]
    alpha, beta = [], []
    for j in range(m):
        v = atoms * Q[j]
        a = float(Q[j] @ v)
        alpha.append(a)
        if j == m - 1:
            break
        v = v - a * Q[j] - (beta[-1] * Q[j - 1] if j > 0 else 0.0)
        basis = np.array(Q)
        v = v - basis.T @ (basis @ v)
        v = v - basis.T @ (basis @ v)
        b = float(np.linalg.norm(v))
        if b <= rel_tol * scale:
            break
        beta.append(b)
        Q.append(v / b)
    return np.array(alpha), np.array(beta)


def moment_match(G: DiscretePrior, L: int) -> DiscretePrior:
    """Gauss quadrature of ``G`` reproducing its first ``L`` raw moments.

    Uses ``ceil((L + 1) / 2)`` nodes, which matches moments up to
    ``2 * nodes - 1 >= L``. A prior already that small is returned unchanged.
    """
    if L < 1:
        raise ValueError("L must be a positive integer")
    m = -(-(L + 1) // 2)
    keep = G.weights > 0
    if np.count_nonzero(keep) <= m:
        return G
    alpha, beta = _lanczos_jacobi(G.atoms[keep], G.weights[keep], m)
    if alpha.size < m:
        return G
    nodes, vecs = np.linalg.eigh(np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1))
    w = vecs[0] ** 2
    nodes = np.clip(nodes, G.atoms[keep].min(), G.atoms[keep].max())
    return type(G)(nodes, w / w.sum(), G.support_bound)
