"""Command-line driver.

    ebpop {gen,regret,lengen,alphafit,contract,npmle} CONFIG [--set key.path=value ...]

Exit status: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bench, hb
from .baselines import NpmleConfig, TypeMatchIndex, npmle_em, npmle_estimator, oracle_bayes, robbins
from .gaussian import GAUSSIAN, GaussianPrior, gaussian_bayes
from .mixture import POISSON, DiscretePrior

log = logging.getLogger("ebpop")

SUBCOMMANDS = ("gen", "regret", "lengen", "alphafit", "contract", "npmle")
ESTIMATORS = {"poisson": ("oracle", "robbins", "npmle", "hb", "erm"), "gaussian": ("oracle", "hb")}
MAGIC = b"EBDS"
VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    pop: dict
    model: str = "poisson"
    n: int = 50
    n_test_list: list = field(default_factory=lambda: [50])
    n_list: list = field(default_factory=lambda: [16, 64, 256])
    estimators: list = field(default_factory=lambda: ["oracle"])
    reps: int = 256
    mc_draws: int = 4096
    alpha_grid: list = field(default_factory=lambda: [0.125, 0.25, 0.5, 1.0])
    reference: str = "lengen"
    root_seed: int = 0
    output_dir: str = "out"
    test_prior: dict | None = None
    test_pop: dict | None = None
    M: int = 1000
    npmle: dict = field(default_factory=dict)
    workers: int | None = None

    # fields that do not change results and so stay out of the hash
    _UNHASHED = ("output_dir", "workers")

    @classmethod
    def from_dict(cls, raw) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "pop" not in raw:
            raise ConfigError("config needs a 'pop' section")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.model not in ESTIMATORS:
            raise ConfigError(f"unknown model {self.model!r}")
        for name in self.estimators:
            if name not in ESTIMATORS[self.model]:
                raise ConfigError(f"unknown estimator {name!r} for model {self.model}")
        for key in ("n", "reps", "mc_draws", "M"):
            if not isinstance(getattr(self, key), int) or getattr(self, key) < 1:
                raise ConfigError(f"{key} must be a positive integer")
        if any(not isinstance(v, int) or v < 1 for v in list(self.n_test_list) + list(self.n_list)):
            raise ConfigError("n_test_list and n_list must hold positive integers")
        if self.reference not in ("lengen", "hb"):
            raise ConfigError("reference must be 'lengen' or 'hb'")
        try:
            self.pop_spec()
            self.npmle_config()
            if self.test_prior is not None:
                self.g0()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid prior specification: {exc}") from exc

    @property
    def obs_model(self):
        return POISSON if self.model == "poisson" else GAUSSIAN

    def pop_spec(self):
        return bench.PoPSpec.from_dict(self.pop, self.obs_model.prior_cls)

    def npmle_config(self) -> NpmleConfig:
        return NpmleConfig(**self.npmle)

    def g0(self):
        """Test prior: explicit ``test_prior``, else one draw from ``test_pop`` (or ``pop``)."""
        A = float(self.pop["A"])
        if self.test_prior is not None:
            return self.obs_model.prior_cls.from_dict({"support_bound": A, **self.test_prior})
        spec = bench.PoPSpec.from_dict(self.test_pop or self.pop, self.obs_model.prior_cls)
        return bench.sample_prior(spec, bench.derive_rng(self.root_seed, "test_prior"), self.obs_model)

    def hashed(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in self._UNHASHED}
        return json.loads(json.dumps(d, default=str))

    @property
    def hash(self) -> str:
        return bench.config_hash(self.hashed())


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override must look like key.path=value, got {item!r}")
    key, value = item.split("=", 1)
    try:
        return key.strip().split("."), yaml.safe_load(value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad override value in {item!r}") from exc


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"malformed config {path}: expected a mapping")
    for item in overrides:
        keys, value = _parse_override(item)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-mapping")
        node[keys[-1]] = value
    if "EB_LAB_SEED" in os.environ:
        try:
            raw["root_seed"] = int(os.environ["EB_LAB_SEED"])
        except ValueError as exc:
            raise ConfigError("EB_LAB_SEED must be an integer") from exc
    return ExperimentConfig.from_dict(raw)


def save_dataset(data: bench.Dataset, path) -> None:
    """Framed little-endian binary: magic, version, dtype code, JSON metadata, theta, x."""
    meta = json.dumps(
        {"pop": data.pop.to_dict(), "model": data.model, "root_seed": data.root_seed, "n": data.n, "M": data.M},
        sort_keys=True,
    ).encode()
    is_int = np.issubdtype(data.x.dtype, np.integer)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<BB", VERSION, 0 if is_int else 1))
        fh.write(struct.pack("<I", len(meta)) + meta)
        for arr in (data.theta.astype("<f8"), data.x.astype("<i8" if is_int else "<f8")):
            fh.write(struct.pack("<Q", arr.size) + arr.tobytes())


def load_dataset(path) -> bench.Dataset:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not an EBDS file")
    version, code = struct.unpack_from("<BB", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported EBDS version {version}")
    (mlen,) = struct.unpack_from("<I", blob, 6)
    meta = json.loads(blob[10 : 10 + mlen])
    off = 10 + mlen
    arrays = []
    for dt in ("<f8", "<i8" if code == 0 else "<f8"):
        (count,) = struct.unpack_from("<Q", blob, off)
        off += 8
        arrays.append(np.frombuffer(blob, dtype=dt, count=count, offset=off).copy())
        off += 8 * count
    shape = (meta["M"], meta["n"])
    prior_cls = GaussianPrior if meta["model"] == "gaussian" else DiscretePrior
    pop = bench.PoPSpec.from_dict(meta["pop"], prior_cls)
    theta, x = arrays[0].reshape(shape), arrays[1].reshape(shape)
    return bench.Dataset(theta, x.astype(np.int64) if code == 0 else x, pop, meta["root_seed"], meta["model"])


def export_dataset_csv(data: bench.Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("batch,index,theta,x\n")
        for m in range(data.M):
            for i in range(data.n):
                fh.write(f"{m},{i},{data.theta[m, i]:.17g},{data.x[m, i]}\n")


def _state(cfg: ExperimentConfig, train_n: int) -> hb.PosteriorState:
    return hb.init_state(
        cfg.pop_spec(), cfg.mc_draws, bench.derive_rng(cfg.root_seed, "pop_state"), train_n, cfg.obs_model
    )


def build_estimators(cfg: ExperimentConfig, G0) -> dict:
    A = float(cfg.pop["A"])
    out = {}
    for name in cfg.estimators:
        if name == "oracle":
            out[name] = (lambda X: gaussian_bayes(G0, X)) if cfg.model == "gaussian" else (lambda X: oracle_bayes(G0, X))
        elif name == "robbins":
            out[name] = lambda X: robbins(X, A)
        elif name == "npmle":
            ncfg = cfg.npmle_config()
            out[name] = lambda X, ncfg=ncfg: npmle_estimator(X, ncfg, A)
        elif name == "hb":
            state = _state(cfg, cfg.n)
            out[name] = lambda X, state=state: hb.hb_estimate(state, X)
        elif name == "erm":
            data = bench.gen_dataset(cfg.pop_spec(), cfg.n, cfg.M, cfg.root_seed, cfg.obs_model)
            out[name] = TypeMatchIndex.from_dataset(data)
    return out


def _out(cfg: ExperimentConfig, stem: str, suffix: str = ".csv") -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"{stem}_{cfg.model}_{cfg.hash}{suffix}"


def cmd_gen(cfg, args):
    data = bench.gen_dataset(cfg.pop_spec(), cfg.n, cfg.M, cfg.root_seed, cfg.obs_model)
    path = _out(cfg, "dataset", ".ebds")
    save_dataset(data, path)
    if args.csv:
        export_dataset_csv(data, path.with_suffix(".csv"))
    return [path]


def cmd_regret(cfg, args):
    G0 = cfg.g0()
    reports = []
    for name, est in build_estimators(cfg, G0).items():
        log.info("regret: %s", name)
        reports.append(
            bench.regret_eval(est, G0, cfg.n, cfg.reps, cfg.root_seed, cfg.obs_model, name=name,
                              config_hash=cfg.hash, workers=cfg.workers)
        )
    return [bench.write_report(reports, _out(cfg, "regret"), "regret")]


def cmd_lengen(cfg, args):
    reports = bench.length_gen_sweep(
        _state(cfg, cfg.n), cfg.g0(), cfg.n_test_list, cfg.reps, cfg.root_seed, cfg.hash, cfg.workers
    )
    return [bench.write_report(reports, _out(cfg, "lengen"), "regret")]


def cmd_alphafit(cfg, args):
    state = _state(cfg, cfg.n)
    rows = []
    for nt in cfg.n_test_list:
        ref = None
        if cfg.reference == "hb":
            def ref(X):
                return hb.hb_estimate(state, X)
        fit = bench.alpha_fit(state, nt, cfg.alpha_grid, cfg.reps, cfg.root_seed, ref, cfg.workers)
        print(f"n={cfg.n} n_test={nt} alpha_star={fit.alpha_star:.17g}")
        rows += fit.rows(cfg.n, nt, cfg.reps, cfg.hash)
    return [bench.write_report(rows, _out(cfg, "alphafit"), "alpha_fit")]


def cmd_contract(cfg, args):
    if cfg.model != "poisson":
        raise ConfigError("contract is only defined for the poisson model")
    rows = bench.contraction_diag(_state(cfg, cfg.n), cfg.g0(), cfg.n_list, cfg.reps, cfg.root_seed, cfg.hash, cfg.workers)
    return [bench.write_report(rows, _out(cfg, "contract"), "contraction")]


def cmd_npmle(cfg, args):
    if cfg.model != "poisson":
        raise ConfigError("npmle is only defined for the poisson model")
    A = float(cfg.pop["A"])
    if args.data:
        X = load_dataset(args.data).x.ravel()
    else:
        _, X = bench.draw_sequence(cfg.g0(), cfg.n, bench.derive_rng(cfg.root_seed, "npmle"))
    fit = npmle_em(X, cfg.npmle_config(), A)
    log.info("npmle: %d iterations, converged=%s", fit.iterations, fit.converged)
    path = _out(cfg, "npmle")
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("atom,weight\n")
        for a, w in zip(fit.prior.atoms, fit.prior.weights):
            fh.write(f"{a:.17g},{w:.17g}\n")
    return [path]


COMMANDS = {
    "gen": cmd_gen,
    "regret": cmd_regret,
    "lengen": cmd_lengen,
    "alphafit": cmd_alphafit,
    "contract": cmd_contract,
    "npmle": cmd_npmle,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebpop", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", help="YAML experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default: available cores)")
    p.add_argument("--csv", action="store_true", help="gen: also export the dataset as CSV")
    p.add_argument("--data", help="npmle: fit to the observations in an EBDS dataset file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(subcommand: str, config_path, overrides=(), **opts) -> int:
    argv = [subcommand, str(config_path)]
    for o in overrides:
        argv += ["--set", o]
    for k, v in opts.items():
        if v is True:
            argv.append(f"--{k}")
        elif v not in (None, False):
            argv += [f"--{k}", str(v)]
    return main(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, args.overrides)
        cfg.workers = args.workers or cfg.workers or os.cpu_count() or 1
        paths = COMMANDS[args.subcommand](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
