"""Priors on priors: samplers, truncation and a prior-mass diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf

from .mixture import POISSON, DiscretePrior, divergence, marginal_pmf


class PoPKind(str, Enum):
    UNIFORM_DIRICHLET = "uniform_dirichlet"
    GRID_MULTINOMIAL = "grid_multinomial"
    NEURAL = "neural"
    FINITE = "finite"


@dataclass(frozen=True)
class PoPSpec:
    kind: PoPKind
    A: float
    k: int = 10
    grid_step: float = 0.1
    components: tuple = ()
    neural_mixture_count: int = 4
    hidden_dim: int = 16
    grid_points: int = 512
    scale_to_support: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", PoPKind(self.kind))
        object.__setattr__(self, "components", tuple(self.components))
        if not self.A > 0:
            raise ValueError("A must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kind is PoPKind.FINITE and not self.components:
            raise ValueError("FINITE PoP needs at least one component")
        if self.kind is PoPKind.GRID_MULTINOMIAL and not 0 < self.grid_step <= self.A:
            raise ValueError("grid_step must lie in (0, A]")
        if self.kind is PoPKind.NEURAL and (self.hidden_dim < 1 or self.grid_points < 2):
            raise ValueError("neural PoP needs hidden_dim >= 1 and grid_points >= 2")

    @classmethod
    def finite(cls, components, A: float | None = None) -> "PoPSpec":
        components = tuple(components)
        if A is None:
            A = max(c.support_bound for c in components)
        return cls(PoPKind.FINITE, A, components=components)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "A": self.A}
        if self.kind is PoPKind.UNIFORM_DIRICHLET:
            d["k"] = self.k
        elif self.kind is PoPKind.GRID_MULTINOMIAL:
            d["grid_step"] = self.grid_step
        elif self.kind is PoPKind.NEURAL:
            d.update(
                neural_mixture_count=self.neural_mixture_count,
                hidden_dim=self.hidden_dim,
                grid_points=self.grid_points,
                scale_to_support=self.scale_to_support,
            )
        else:
            d["components"] = [c.to_dict() for c in self.components]
        return d

    @classmethod
    def from_dict(cls, d: dict, prior_cls=DiscretePrior) -> "PoPSpec":
        d = dict(d)
        kind = PoPKind(str(d.pop("kind")).lower())
        comps = d.pop("components", ())
        if kind is PoPKind.FINITE:
            A = float(d["A"])
            comps = tuple(prior_cls.from_dict({"support_bound": A, **c}) for c in comps)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown PoP fields: {sorted(unknown)}")
        return cls(kind, components=comps, **d)


def dirichlet_weights(rng: np.random.Generator, k: int) -> np.ndarray:
    g = rng.standard_gamma(1.0, size=k)
    return g / g.sum()


def _gelu(z):
    return 0.5 * z * (1.0 + erf(z / math.sqrt(2.0)))


def _selu(z):
    a, s = 1.6732632423543772, 1.0507009873554805
    return s * np.where(z > 0, z, a * np.expm1(np.minimum(z, 0.0)))


ACTIVATIONS = {
    "gelu": _gelu,
    "relu": lambda z: np.maximum(z, 0.0),
    "selu": _selu,
    "celu": lambda z: np.where(z > 0, z, np.expm1(np.minimum(z, 0.0))),
    "silu": lambda z: z / (1.0 + np.exp(-z)),
    "tanh": np.tanh,
    "tanhshrink": lambda z: z - np.tanh(z),
}


def _merge_atoms(atoms: np.ndarray, weights: np.ndarray):
    uniq, inv = np.unique(atoms, return_inverse=True)
    return uniq, np.bincount(inv, weights=weights)


def neural_prior(
    rng: np.random.Generator,
    A: float,
    hidden_dim: int = 16,
    grid_points: int = 512,
    mixture_count: int = 4,
    scale_to_support: bool = True,
    w2_scale: float = 1.0,
    prior_cls=DiscretePrior,
):
    """Mixture of random two-layer-perceptron pushforwards of a uniform grid.

    Each component maps ``x in [0, A]`` through ``sigmoid(10 W2 act(W1 x))`` with
    a randomly chosen activation. ``w2_scale=0`` zeroes the output layer, which
    collapses every component onto 1/2.
    """
    if hidden_dim < 1 or grid_points < 2:
        raise ValueError("hidden_dim >= 1 and grid_points >= 2 required")
    names = sorted(ACTIVATIONS)
    x = np.linspace(0.0, A, grid_points)
    base = []
    for _ in range(mixture_count):
        W1 = rng.standard_normal(hidden_dim)
        W2 = rng.standard_normal(hidden_dim) / math.sqrt(hidden_dim) * w2_scale
        act = ACTIVATIONS[names[rng.integers(len(names))]]
        z = 10.0 * (act(np.outer(x, W1)) @ W2)
        base.append(0.5 * (1.0 + np.tanh(0.5 * z)))
    atoms = np.concatenate(base)
    if scale_to_support:
        atoms = atoms * A
    atoms = np.clip(atoms, 0.0, A)
    uniq, w = _merge_atoms(atoms, np.full(atoms.size, 1.0 / atoms.size))
    return prior_cls(uniq, w / w.sum(), A)


def sample_prior(spec: PoPSpec, rng: np.random.Generator, model=POISSON):
    lo = model.lower(spec.A)
    if spec.kind is PoPKind.UNIFORM_DIRICHLET:
        atoms = rng.uniform(lo, spec.A, size=spec.k)
        return model.prior_cls(atoms, dirichlet_weights(rng, spec.k), spec.A)
    if spec.kind is PoPKind.GRID_MULTINOMIAL:
        count = int(round(spec.A / spec.grid_step))
        atoms = np.minimum(spec.grid_step * np.arange(1, count + 1), spec.A)
        if lo < 0:
            atoms = np.concatenate([-atoms[::-1], [0.0], atoms])
        return model.prior_cls(atoms, dirichlet_weights(rng, atoms.size), spec.A)
    if spec.kind is PoPKind.FINITE:
        return spec.components[rng.integers(len(spec.components))]
    return neural_prior(
        rng,
        spec.A,
        hidden_dim=spec.hidden_dim,
        grid_points=spec.grid_points,
        mixture_count=spec.neural_mixture_count,
        scale_to_support=spec.scale_to_support,
        prior_cls=model.prior_cls,
    )


def truncate_prior(G: DiscretePrior, cutoff: float) -> DiscretePrior:
    keep = G.atoms <= cutoff
    mass = G.weights[keep].sum()
    if not mass > 0:
        raise ValueError(f"no prior mass at or below cutoff {cutoff:g}")
    if keep.all():
        return G
    return type(G)(G.atoms[keep], G.weights[keep] / mass, G.support_bound)


def pop_mass_estimate(
    spec: PoPSpec,
    target: DiscretePrior,
    eps: float,
    draws: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo mass of ``{G': chi^2(f_target || f_G') <= eps}`` under the PoP.

    Meant as a relaxed-threshold diagnostic; tiny thresholds are out of reach
    of sampling.
    """
    if not eps > 0 or draws < 1:
        raise ValueError("eps > 0 and draws >= 1 required")
    if math.isinf(eps):
        return 1.0
    x_max = POISSON.x_max(spec.A)
    f_target = marginal_pmf(target, x_max)
    hits = 0
    for _ in range(draws):
        G = sample_prior(spec, rng)
        hits += divergence(f_target, marginal_pmf(G, x_max), "chi2") <= eps
    return hits / draws
