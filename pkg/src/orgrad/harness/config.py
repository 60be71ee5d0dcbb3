"""Experiment configuration: INI sections, presets and CLI overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from typing import Optional

from ..errors import ConfigError

EXPERIMENTS = ("tradeoff", "noise_sweep", "completion", "regret_const",
               "regret_adaptive", "movielens", "diagnose")


def _ints(text):
    return tuple(int(v) for v in _split(text))


def _floats(text):
    return tuple(float(v) for v in _split(text))


def _strs(text):
    return tuple(_split(text))


def _split(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [v for v in str(text).replace(",", " ").split() if v]


def _bool(text):
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str = "out"
    reproducible: bool = False
    workers: int = 1
    # truth
    recipe: str = "regression"
    dims: tuple = (30, 30, 30)
    ranks: tuple = (2, 2, 2)
    truth_seed: Optional[int] = None
    # observation model
    design: str = "gaussian"
    loss: str = "linear"
    sigma: float = 1.0
    sigma_link: float = 1.0
    intensity: float = 1.0
    # schedule and grids
    eta: tuple = (1e-3,)
    eta_scale: float = 0.01
    eta0: float = 4e-3
    t0: int = 1000
    sigmas: tuple = (1.0,)
    horizon: int = 15000
    horizons: tuple = (5000, 10000, 20000, 40000)
    n_trials: int = 5
    # initialization
    init: str = "oracle_perturb"
    init_c: float = 0.3
    n_init: int = 2000
    reuse_init_samples: bool = False
    # logging
    stride: int = 0
    record_sup: bool = True
    # movielens
    data: str = ""
    n_train: int = 80000
    rank_grid: tuple = (2, 5, 10, 15)
    modes: tuple = ("online", "offline")
    shape: tuple = (1000, 1700)
    eta_grid: tuple = (2e-6, 5e-6, 1e-5, 2e-5)
    offline_eta_grid: tuple = (0.25, 0.5, 1.0)
    offline_iters: int = 100
    holdout: float = 0.1
    passes: int = 1
    # diagnose
    tensor: str = ""

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        for name in ("eta", "sigmas", "horizons", "rank_grid", "modes", "eta_grid", "offline_eta_grid"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"grid {name!r} is empty")
        if len(self.dims) != len(self.ranks) and self.experiment not in ("movielens", "diagnose"):
            raise ConfigError(f"dims {self.dims} and ranks {self.ranks} differ in length")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.init not in ("oracle_perturb", "second_moment"):
            raise ConfigError(f"unknown init mode {self.init!r}")
        if any(h < 1 for h in self.horizons) or self.horizon < 1:
            raise ConfigError("horizons must be positive")

    @property
    def effective_truth_seed(self) -> int:
        return self.seed if self.truth_seed is None else self.truth_seed


PARSERS = {
    "experiment": str, "seed": int, "out": str, "reproducible": _bool, "workers": int,
    "recipe": str, "dims": _ints, "ranks": _ints, "truth_seed": int,
    "design": str, "loss": str, "sigma": float, "sigma_link": float, "intensity": float,
    "eta": _floats, "eta_scale": float, "eta0": float, "t0": int, "sigmas": _floats,
    "horizon": int, "horizons": _ints, "n_trials": int,
    "init": str, "init_c": float, "n_init": int, "reuse_init_samples": _bool,
    "stride": int, "record_sup": _bool,
    "data": str, "n_train": int, "rank_grid": _ints, "modes": _strs, "shape": _ints,
    "eta_grid": _floats, "offline_eta_grid": _floats, "offline_iters": int,
    "holdout": float, "passes": int, "tensor": str,
}
assert set(PARSERS) == {f.name for f in fields(ExperimentConfig)}

# default settings for each experiment
PRESETS = {
    "tradeoff": dict(recipe="regression", dims=(30, 30, 30), ranks=(2, 2, 2), design="gaussian",
                     sigma=1.0, eta=(5e-4, 1e-3, 5e-3), horizon=15000, n_trials=5),
    "noise_sweep": dict(recipe="regression", dims=(30, 30, 30), ranks=(2, 2, 2), design="gaussian",
                        eta=(1e-3,), sigmas=(1.0, 2.0, 3.0, 4.0, 5.0), horizon=20000, n_trials=10),
    "completion": dict(recipe="completion", dims=(75, 75, 75), ranks=(2, 2, 2), design="entry",
                       sigma=0.1, eta=(5e-5, 7.5e-5, 1e-4), horizon=100000, n_trials=5),
    "regret_const": dict(recipe="matrix", dims=(30, 30), ranks=(2, 2), design="gaussian", sigma=0.2,
                         eta_scale=0.01, horizons=tuple(range(5000, 200001, 5000)), n_trials=5,
                         init="second_moment"),
    "regret_adaptive": dict(recipe="matrix", dims=(30, 30), ranks=(2, 2), design="gaussian", sigma=0.2,
                            eta0=4e-3, t0=1000, horizons=tuple(range(5000, 200001, 5000)), n_trials=5,
                            init="second_moment"),
    "movielens": dict(design="entry", loss="linear", data="data/ml-100k/u.data"),
    "diagnose": dict(),
}


def parse_value(key: str, value):
    if key not in PARSERS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return PARSERS[key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc


def read_ini(path, experiment: str) -> dict:
    """Keys from ``[DEFAULT]`` then ``[experiment]`` of a flat INI file."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = dict(parser.defaults())
    if parser.has_section(experiment):
        values.update({k: v for k, v in parser.items(experiment)})
    return values


def build_config(experiment: str, ini: Optional[dict] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Preset, then INI values, then CLI overrides (later wins)."""
    values = dict(PRESETS.get(experiment, {}))
    for source in (ini or {}, overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            values[key] = parse_value(key, raw)
    values["experiment"] = experiment
    return ExperimentConfig(**values)


def config_items(cfg: ExperimentConfig):
    """Flat ``(key, text)`` pairs for metadata headers."""
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        text = " ".join(repr(x) if isinstance(x, float) else str(x) for x in v) if isinstance(v, tuple) else (
            repr(v) if isinstance(v, float) else str(v))
        out.append((f.name, text))
    return out

