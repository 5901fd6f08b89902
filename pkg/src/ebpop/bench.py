"""Experiment engine: data generation, Monte-Carlo regret, length-generalisation
sweeps, alpha fits and posterior-contraction diagnostics.

Every random stream is derived from ``(root_seed, tag, rep)`` so that results
are a pure function of the configuration, independent of worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import hb
from .mixture import POISSON, marginal_pmf, posterior_moment_array
from .pop import PoPSpec, sample_prior


def derive_rng(root_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(root_seed) & (2**64 - 1), spawn_key=(zlib.crc32(tag.encode()), index))
    return np.random.default_rng(ss)


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def draw_sequence(G, n: int, rng: np.random.Generator, model=POISSON):
    theta = rng.choice(G.atoms, p=G.weights, size=n)
    return theta, model.sample(rng, theta)


@dataclass(eq=False)
class Dataset:
    theta: np.ndarray  # (M, n)
    x: np.ndarray  # (M, n)
    pop: PoPSpec
    root_seed: int
    model: str = "poisson"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.x = np.asarray(self.x)
        if self.theta.shape != self.x.shape or self.theta.ndim != 2:
            raise ValueError("theta and x must be (M, n) arrays of equal shape")

    @property
    def n(self) -> int:
        return self.theta.shape[1]

    @property
    def M(self) -> int:
        return self.theta.shape[0]

    @property
    def batches(self):
        return list(zip(self.theta, self.x))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.x, other.x)
            and self.x.dtype == other.x.dtype
            and self.pop.to_dict() == other.pop.to_dict()
            and self.root_seed == other.root_seed
            and self.model == other.model
        )


def gen_dataset(spec: PoPSpec, n: int, M: int, seed: int, model=POISSON) -> Dataset:
    """M batches of ``G ~ Pi, theta ~ G^n, X_i ~ p(. | theta_i)``."""
    if n < 1 or M < 1:
        raise ValueError("n and M must be >= 1")
    rng = derive_rng(seed, "gen")
    theta = np.empty((M, n))
    x = np.empty((M, n), dtype=np.int64 if model.discrete else float)
    for m in range(M):
        G = sample_prior(spec, rng, model)
        theta[m], x[m] = draw_sequence(G, n, rng, model)
    return Dataset(theta, x, spec, seed, model.name)


@dataclass
class RegretReport:
    estimator_name: str
    n: int
    n_test: int
    reps: int
    mean_regret: float
    stderr: float
    config_hash: str = ""
    failures: int = 0

    CSV_COLUMNS = ("estimator", "n", "n_test", "reps", "mean_regret", "stderr", "config_hash")

    def csv_row(self):
        return [self.estimator_name, self.n, self.n_test, self.reps, self.mean_regret, self.stderr, self.config_hash]


@dataclass
class AlphaFitRow:
    alpha: float
    msd: float
    n: int
    n_test: int
    reps: int
    config_hash: str = ""

    CSV_COLUMNS = ("alpha", "msd", "n", "n_test", "reps", "config_hash")

    def csv_row(self):
        return [self.alpha, self.msd, self.n, self.n_test, self.reps, self.config_hash]


@dataclass
class ContractionRow:
    n: int
    median_h2: float
    q90_h2: float
    reps: int
    config_hash: str = ""

    CSV_COLUMNS = ("n", "median_h2", "q90_h2", "reps", "config_hash")

    def csv_row(self):
        return [self.n, self.median_h2, self.q90_h2, self.reps, self.config_hash]


REPORT_KINDS = {"regret": RegretReport, "alpha_fit": AlphaFitRow, "contraction": ContractionRow}


def _run_reps(fn: Callable[[int], float], reps: int, workers: int) -> list:
    if workers <= 1:
        return [fn(r) for r in range(reps)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(reps)))


def regret_eval(
    estimator: Callable,
    G0,
    n: int,
    reps: int,
    seed: int,
    model=POISSON,
    name: str | None = None,
    tag: str = "regret",
    n_report: int | None = None,
    config_hash: str = "",
    workers: int = 1,
) -> RegretReport:
    """Mean of ``(1/n) ||est(X) - theta_{G0}(X)||^2`` over ``reps`` fresh sequences.

    Measuring the distance to the oracle Bayes rule rather than to the latent
    theta gives the same expectation with less variance, and makes the oracle's
    own regret exactly zero. Reps are keyed by tag, so all estimators evaluated
    under the same tag see the same data.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")

    def one(r):
        _, X = draw_sequence(G0, n, derive_rng(seed, tag, r), model)
        bayes = posterior_moment_array(G0, X, 1, model)
        try:
            est = np.asarray(estimator(X), dtype=float)
        except Exception:
            return None
        return float(np.mean((est - bayes) ** 2))

    losses = [v for v in _run_reps(one, reps, workers) if v is not None]
    if not losses:
        raise RuntimeError(f"estimator {name or estimator!r} failed on every rep")
    arr = np.array(losses)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return RegretReport(
        name or getattr(estimator, "__name__", "estimator"),
        n if n_report is None else n_report,
        n,
        arr.size,
        float(arr.mean()),
        stderr,
        config_hash,
        reps - arr.size,
    )


def exact_regret(G_est, G0, model=POISSON) -> float:
    """``E_{f_G0}[(theta_{G_est}(X) - theta_{G0}(X))^2]`` by summation over the truncated pmf."""
    f0 = marginal_pmf(G0)
    xs = np.arange(f0.x_max + 1)
    keep = f0.values > 0
    d = posterior_moment_array(G_est, xs[keep], 1, model) - posterior_moment_array(G0, xs[keep], 1, model)
    return float(np.sum(f0.values[keep] * d**2))


def length_gen_sweep(
    state: hb.PosteriorState,
    G0,
    n_test_list: Sequence[int],
    reps: int,
    seed: int,
    config_hash: str = "",
    workers: int = 1,
    name: str = "hb_lengen",
) -> list[RegretReport]:
    if not n_test_list:
        raise ValueError("n_test_list must be nonempty")

    def est(X):
        return hb.lengen_estimate(state, X)

    return [
        regret_eval(
            est, G0, nt, reps, seed, state.model, name=name, tag=f"lengen/{nt}",
            n_report=state.train_n, config_hash=config_hash, workers=workers,
        )
        for nt in n_test_list
    ]


@dataclass
class AlphaFit:
    alpha_star: float
    curve: list

    def rows(self, n, n_test, reps, config_hash=""):
        return [AlphaFitRow(a, m, n, n_test, reps, config_hash) for a, m in self.curve]


def alpha_fit(
    state: hb.PosteriorState,
    n_test: int,
    alpha_grid: Sequence[float],
    reps: int,
    seed: int,
    reference: Callable | None = None,
    workers: int = 1,
) -> AlphaFit:
    """Mean squared distance between a reference estimator and alpha-posterior HB.

    Test sequences come from the PoP marginal represented by ``state``. The
    default reference is the length-generalised HB map, whose best alpha is
    ``train_n / n_test``.
    """
    grid = [float(a) for a in alpha_grid]
    if not grid or any(not 0 < a <= 1 for a in grid):
        raise ValueError("alpha_grid must be a nonempty subset of (0, 1]")
    if reference is None:
        def reference(X):
            return hb.lengen_estimate(state, X)

    w = state.weights

    def one(r):
        rng = derive_rng(seed, "alphafit", r)
        G = state.priors[rng.choice(len(state.priors), p=w)]
        _, X = draw_sequence(G, n_test, rng, state.model)
        ref = np.asarray(reference(X), dtype=float)
        return [float(np.mean((ref - hb.hb_estimate(state, X, a)) ** 2)) for a in grid]

    msd = np.mean(np.array(_run_reps(one, reps, workers)), axis=0)
    curve = list(zip(grid, msd.tolist()))
    return AlphaFit(grid[int(np.argmin(msd))], curve)


def hellinger2(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))


def contraction_diag(
    state: hb.PosteriorState,
    G0,
    n_list: Sequence[int],
    reps: int,
    seed: int,
    config_hash: str = "",
    workers: int = 1,
) -> list[ContractionRow]:
    """Squared Hellinger distance between f_{G0} and the posterior predictive of X_n given X^{n-1}."""
    if list(n_list) != sorted(n_list) or not n_list or n_list[0] < 1:
        raise ValueError("n_list must be a nonempty increasing list of positive integers")
    x_max = state.model.x_max(state.A)
    xs = np.arange(x_max + 1)
    f0 = marginal_pmf(G0, x_max).values
    lf_grid, _ = hb.candidate_tables(state, xs)
    rows = []
    for n in n_list:
        def one(r, n=n):
            _, X = draw_sequence(G0, n - 1, derive_rng(seed, f"contract/{n}", r), state.model)
            lw = state.log_weights
            if X.size:
                lw = hb.posterior_update(state, X, state.alpha).log_weights
            pred = np.exp(logsumexp(lw[:, None] + lf_grid, axis=0))
            return hellinger2(pred, f0)

        h2 = np.array(_run_reps(one, reps, workers))
        rows.append(ContractionRow(n, float(np.median(h2)), float(np.quantile(h2, 0.9)), reps, config_hash))
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_report(reports, path, kind: str | None = None) -> Path:
    """Write rows as CSV (header, LF endings, reals at 17 significant digits)."""
    reports = list(reports)
    if kind is None:
        kind = next((k for k, cls in REPORT_KINDS.items() if reports and isinstance(reports[0], cls)), "regret")
    cls = REPORT_KINDS[kind]
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cls.CSV_COLUMNS)
            for rep in reports:
                w.writerow([_fmt(v) for v in rep.csv_row()])
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path) -> list:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    cls = next(c for c in REPORT_KINDS.values() if c.CSV_COLUMNS == header)
    types = {f.name: f.type for f in fields(cls)}
    out = []
    for row in rows[1:]:
        vals = []
        for fname, v in zip([f.name for f in fields(cls)], row):
            t = types[fname]
            vals.append(int(v) if t == "int" else float(v) if t == "float" else v)
        out.append(cls(*vals))
    return out
