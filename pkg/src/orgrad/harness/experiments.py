"""Simulation and real-data experiment drivers that emit CSV artifacts."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import chain

import numpy as np

from .. import __version__
from ..errors import ConfigError, OrgradError
from ..glm import LossModel
from ..learner import LOG_COLUMNS, Adaptive, Fixed, Runner, default_stride, run
from ..manifold import SpectralReport, spectral_report
from ..sampling import (TruthSpec, gen_truth, init_oracle_perturb, init_second_moment, stream,
                        stream_sigma_grid, trial_rng)
from ..tensor import dof, read_tensor, write_tensor
from .config import ExperimentConfig, config_items
from .csvio import write_csv
from .pool import ordered_map

INIT_STREAM, ONLINE_STREAM = 0, 1


@dataclass
class ExperimentResult:
    experiment: str
    artifacts: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def linear_fit(x, y, intercept: bool = True):
    """Least-squares line; returns ``(slope, intercept, r2)``.

    Without an intercept the fit is through the origin and ``r2`` still uses
    the centred total sum of squares, so a line through zero is not credited
    with explaining the mean.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if intercept:
        A = np.column_stack([x, np.ones_like(x)])
        (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    else:
        slope, icpt = float(x @ y / (x @ x)), 0.0
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
    return float(slope), float(icpt), r2


def steps_to_plateau(t, rel_err, factor: float = 1.2) -> int:
    """First recorded step whose relative error is within ``factor`` of the final one."""
    rel_err = np.asarray(rel_err, dtype=float)
    hit = np.flatnonzero(rel_err <= factor * rel_err[-1])
    return int(np.asarray(t)[hit[0]])


def _meta(cfg: ExperimentConfig, extra=()):
    items = [("orgrad", __version__), ("experiment", cfg.experiment), ("seed", cfg.seed)]
    items += [(f"config.{k}", v) for k, v in config_items(cfg) if k not in ("experiment", "seed", "out", "reproducible")]
    return items + list(extra)


def _model(cfg: ExperimentConfig, sigma=None) -> LossModel:
    return LossModel(cfg.loss, sigma=cfg.sigma if sigma is None else sigma,
                     sigma_link=cfg.sigma_link, intensity=cfg.intensity)


def make_truth(cfg: ExperimentConfig):
    return gen_truth(TruthSpec(cfg.recipe, tuple(cfg.dims), tuple(cfg.ranks), cfg.effective_truth_seed))


def make_init(cfg: ExperimentConfig, truth, model: LossModel, trial: int):
    """Warm start for one trial, plus the burn-in observations when they are reused."""
    rng = trial_rng(cfg.seed, trial, INIT_STREAM)
    if cfg.init == "oracle_perturb":
        return init_oracle_perturb(truth, cfg.init_c, rng), []
    burn = list(stream(truth, cfg.design, model, cfg.n_init, rng))
    init = init_second_moment(burn, truth.dims, truth.ranks)
    return init, (burn if cfg.reuse_init_samples else [])


def simulate(cfg: ExperimentConfig, truth, schedule, horizon: int, trial: int, sigma=None,
             track_regret: bool = True):
    """One trial: warm start then ``horizon`` online steps; returns the log."""
    model = _model(cfg, sigma)
    init, burn = make_init(cfg, truth, model, trial)
    rng = trial_rng(cfg.seed, trial, ONLINE_STREAM)
    n_fresh = max(0, horizon - len(burn))
    obs = chain(burn[:horizon], stream(truth, cfg.design, model, n_fresh, rng))
    stride = cfg.stride if cfg.stride > 0 else default_stride(horizon)
    _, log = run(init, obs, schedule, model, truth=truth, horizon=horizon, stride=stride,
                 record_sup=cfg.record_sup, track_regret=track_regret)
    return log


def simulate_sigma_grid(cfg: ExperimentConfig, truth, schedule, horizon: int, trial: int, sigmas,
                        track_regret: bool = True):
    """``[simulate(..., sigma=s) for s in sigmas]`` with the covariates drawn once.

    Exact for the linear model without reused burn-in samples; other
    settings fall back to separate runs.
    """
    if cfg.loss != "linear" or cfg.reuse_init_samples:
        return [simulate(cfg, truth, schedule, horizon, trial, s, track_regret) for s in sigmas]
    stride = cfg.stride if cfg.stride > 0 else default_stride(horizon)
    runners = []
    for s in sigmas:
        model = _model(cfg, s)
        init, _ = make_init(cfg, truth, model, trial)
        runners.append(Runner(init, schedule, model, truth, horizon, stride, cfg.record_sup, track_regret))
    rng = trial_rng(cfg.seed, trial, ONLINE_STREAM)
    for step in stream_sigma_grid(truth, cfg.design, sigmas, horizon, rng):
        live = [r.feed(obs) for r, obs in zip(runners, step)]
        if not any(live):
            break
    return [r.finish()[1] for r in runners]


def _mean_records(logs):
    """Column-wise trial mean; ragged (diverged) trials pad with NaN."""
    n = max(len(log.records["t"]) for log in logs)
    t = next(log.records["t"] for log in logs if len(log.records["t"]) == n)
    out = {"t": list(t)}
    for c in LOG_COLUMNS[1:]:
        stack = np.full((len(logs), n), np.nan)
        for i, log in enumerate(logs):
            v = log.records[c]
            stack[i, : len(v)] = v
        out[c] = stack.mean(axis=0)
    return out


def _eta_tag(x) -> str:
    return repr(float(x)).replace("-", "m")


def _truth_artifacts(cfg, truth, report: SpectralReport, res: ExperimentResult):
    path = os.path.join(cfg.out, "truth.tensor")
    os.makedirs(cfg.out, exist_ok=True)
    write_tensor(path, truth)
    res.artifacts.append(path)
    header = SpectralReport.CSV_HEADER.split(",") + ["dof"]
    row = [report.lambda_min, report.lambda_max, report.kappa0, report.incoherence, report.spikiness,
           dof(truth.dims, truth.ranks)]
    res.artifacts.append(write_csv(os.path.join(cfg.out, "truth_report.csv"), header, [row],
                                   _meta(cfg), cfg.reproducible))
    res.extra["truth_report"] = report


def run_stepsize_grid(cfg: ExperimentConfig) -> ExperimentResult:
    """Trajectories over a step-size grid (the trade-off and completion experiments)."""
    truth, report = make_truth(cfg)
    res = ExperimentResult(cfg.experiment)
    _truth_artifacts(cfg, truth, report, res)
    tasks = [(cfg, truth, Fixed(eta), cfg.horizon, trial, None, True)
             for eta in cfg.eta for trial in range(cfg.n_trials)]
    logs = ordered_map(simulate, tasks, cfg.workers)
    summary_header = ["eta", "final_rel_err_mean", "final_rel_err_sd", "final_fro_err_mean",
                      "final_sup_err_mean", "plateau_t", "max_incoh", "diverged"]
    rows = []
    for g, eta in enumerate(cfg.eta):
        group = logs[g * cfg.n_trials:(g + 1) * cfg.n_trials]
        mean = _mean_records(group)
        path = os.path.join(cfg.out, f"trajectory_eta_{_eta_tag(eta)}.csv")
        traj_rows = [[mean[c][i] if c != "t" else mean["t"][i] for c in LOG_COLUMNS]
                     for i in range(len(mean["t"]))]
        res.artifacts.append(write_csv(path, LOG_COLUMNS, traj_rows, _meta(cfg, [("eta", repr(eta))]),
                                       cfg.reproducible))
        finals = np.array([log.final("rel_err") for log in group])
        rows.append([float(eta), float(finals.mean()), float(finals.std(ddof=1)) if len(finals) > 1 else 0.0,
                     float(np.mean([log.final("fro_err") for log in group])),
                     float(np.mean([log.final("sup_err") for log in group])),
                     steps_to_plateau(mean["t"], mean["rel_err"]),
                     float(max(max(log.records["incoh"]) for log in group)),
                     sum(log.diverged for log in group)])
        res.extra.setdefault("trajectories", {})[float(eta)] = mean
        res.extra.setdefault("logs", {})[float(eta)] = group
    res.summary = [dict(zip(summary_header, r)) for r in rows]
    res.artifacts.append(write_csv(os.path.join(cfg.out, "summary.csv"), summary_header, rows,
                                   _meta(cfg), cfg.reproducible))
    return res


def run_noise_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    truth, report = make_truth(cfg)
    res = ExperimentResult(cfg.experiment)
    _truth_artifacts(cfg, truth, report, res)
    eta = cfg.eta[0]
    tasks = [(cfg, truth, Fixed(eta), cfg.horizon, trial, cfg.sigmas, False) for trial in range(cfg.n_trials)]
    per_trial = ordered_map(simulate_sigma_grid, tasks, cfg.workers)
    # regroup to sigma-major order
    logs = [per_trial[trial][g] for g in range(len(cfg.sigmas)) for trial in range(cfg.n_trials)]
    header = ["sigma", "fro_err_mean", "fro_err_sd", "rel_err_mean", "rel_err_sd", "n_trials", "diverged"]
    rows = []
    for g, sigma in enumerate(cfg.sigmas):
        group = logs[g * cfg.n_trials:(g + 1) * cfg.n_trials]
        fro = np.array([log.final("fro_err") for log in group])
        rel = np.array([log.final("rel_err") for log in group])
        sd = (lambda a: float(a.std(ddof=1)) if a.size > 1 else 0.0)
        rows.append([float(sigma), float(fro.mean()), sd(fro), float(rel.mean()), sd(rel), len(group),
                     sum(log.diverged for log in group)])
    res.artifacts.append(write_csv(os.path.join(cfg.out, "noise_sweep.csv"), header, rows,
                                   _meta(cfg, [("eta", repr(eta))]), cfg.reproducible))
    slope, _, r2 = linear_fit([r[0] for r in rows], [r[1] for r in rows], intercept=False)
    fit_header = ["x", "y", "slope", "intercept", "r2"]
    fit_rows = [["sigma", "fro_err_mean", slope, 0.0, r2]]
    res.artifacts.append(write_csv(os.path.join(cfg.out, "fit.csv"), fit_header, fit_rows,
                                   _meta(cfg), cfg.reproducible))
    res.summary = [dict(zip(header, r)) for r in rows]
    res.extra["fit"] = {"slope": slope, "r2": r2}
    return res


def _regret_trial_const(cfg, truth, horizon, trial):
    log = simulate(cfg, truth, Fixed(cfg.eta_scale / math.sqrt(horizon)), horizon, trial)
    return [0.5 * float(np.sum(log.sq_err[:horizon]))], log.diverged


def _regret_trial_adaptive(cfg, truth, horizons, trial):
    # the adaptive schedule does not depend on T, so every horizon is a prefix of one run
    T_max = max(horizons)
    log = simulate(cfg, truth, Adaptive(cfg.eta0, cfg.t0), T_max, trial)
    cum = np.concatenate([[0.0], 0.5 * np.cumsum(np.asarray(log.sq_err, dtype=float))])
    return [float(cum[min(T, len(cum) - 1)]) for T in horizons], log.diverged


def run_regret(cfg: ExperimentConfig) -> ExperimentResult:
    truth, report = make_truth(cfg)
    res = ExperimentResult(cfg.experiment)
    _truth_artifacts(cfg, truth, report, res)
    horizons = list(cfg.horizons)
    if cfg.experiment == "regret_const":
        tasks = [(cfg, truth, T, trial) for T in horizons for trial in range(cfg.n_trials)]
        out = ordered_map(_regret_trial_const, tasks, cfg.workers)
        regrets = np.array([o[0][0] for o in out]).reshape(len(horizons), cfg.n_trials)
        diverged = np.array([o[1] for o in out]).reshape(len(horizons), cfg.n_trials).sum(axis=1)
    else:
        tasks = [(cfg, truth, horizons, trial) for trial in range(cfg.n_trials)]
        out = ordered_map(_regret_trial_adaptive, tasks, cfg.workers)
        regrets = np.array([o[0] for o in out]).T
        diverged = np.full(len(horizons), sum(o[1] for o in out))
    for i, T in enumerate(horizons):
        meta = _meta(cfg, [("horizon", T)])
        if cfg.experiment == "regret_const":
            meta.append(("eta", repr(cfg.eta_scale / math.sqrt(T))))
        rows = [[trial, T, float(regrets[i, trial])] for trial in range(cfg.n_trials)]
        res.artifacts.append(write_csv(os.path.join(cfg.out, f"regret_T_{T}.csv"), ["trial", "T", "regret"],
                                       rows, meta, cfg.reproducible))
    header = ["T", "sqrt_T", "log_T", "regret_mean", "regret_sd", "diverged"]
    rows = []
    for i, T in enumerate(horizons):
        r = regrets[i]
        rows.append([T, math.sqrt(T), math.log(T), float(r.mean()),
                     float(r.std(ddof=1)) if r.size > 1 else 0.0, int(diverged[i])])
    res.artifacts.append(write_csv(os.path.join(cfg.out, "summary.csv"), header, rows, _meta(cfg),
                                   cfg.reproducible))
    xname = "sqrt_T" if cfg.experiment == "regret_const" else "log_T"
    xi = header.index(xname)
    slope, icpt, r2 = linear_fit([r[xi] for r in rows], [r[3] for r in rows])
    res.artifacts.append(write_csv(os.path.join(cfg.out, "fit.csv"), ["x", "y", "slope", "intercept", "r2"],
                                   [[xname, "regret_mean", slope, icpt, r2]], _meta(cfg), cfg.reproducible))
    res.summary = [dict(zip(header, r)) for r in rows]
    res.extra["fit"] = {"x": xname, "slope": slope, "intercept": icpt, "r2": r2}
    return res


def run_movielens(cfg: ExperimentConfig) -> ExperimentResult:
    from .movielens import baseline_mae, load_movielens, movielens_eval

    path = cfg.data or os.environ.get("ORGRAD_ML100K", "")
    if not path or not os.path.exists(path):
        raise ConfigError(f"MovieLens file not found: {path!r}")
    _, train, test = load_movielens(path, cfg.n_train)
    res = ExperimentResult(cfg.experiment)
    ranks = tuple(cfg.rank_grid)
    header = ["method"] + [f"r{r}" for r in ranks]
    rows, eta_rows = [], []
    for mode in cfg.modes:
        grid = cfg.eta_grid if mode == "online" else cfg.offline_eta_grid
        table = movielens_eval(train, test, ranks, mode, grid, cfg.holdout, tuple(cfg.shape),
                               cfg.offline_iters, cfg.passes)
        rows.append([mode] + [table[r][0] for r in ranks])
        eta_rows.append([mode] + [table[r][1] for r in ranks])
        res.extra[mode] = table
    base = baseline_mae(train, test)
    rows.append(["train_mean"] + [base] * len(ranks))
    res.extra["baseline"] = base
    res.artifacts.append(write_csv(os.path.join(cfg.out, "movielens_mae.csv"), header, rows,
                                   _meta(cfg, [("n_train", len(train)), ("n_test", len(test))]),
                                   cfg.reproducible))
    res.artifacts.append(write_csv(os.path.join(cfg.out, "movielens_eta.csv"), header, eta_rows,
                                   _meta(cfg), cfg.reproducible))
    res.summary = [dict(zip(header, r)) for r in rows]
    return res


def run_diagnose(cfg: ExperimentConfig) -> ExperimentResult:
    if not cfg.tensor:
        raise ConfigError("diagnose needs a tensor file (key 'tensor')")
    X = read_tensor(cfg.tensor)
    if len(cfg.ranks) != X.ndim:
        raise ConfigError(f"ranks {tuple(cfg.ranks)} do not match an order-{X.ndim} tensor")
    try:
        report = spectral_report(X, tuple(cfg.ranks))
    except OrgradError as exc:
        raise ConfigError(str(exc)) from exc
    header = SpectralReport.CSV_HEADER.split(",") + ["dof"]
    row = [report.lambda_min, report.lambda_max, report.kappa0, report.incoherence, report.spikiness,
           dof(X.shape, cfg.ranks)]
    res = ExperimentResult(cfg.experiment, summary=[dict(zip(header, row))])
    res.artifacts.append(write_csv(os.path.join(cfg.out, "diagnose.csv"), header, [row],
                                   _meta(cfg, [("tensor", cfg.tensor)]), cfg.reproducible))
    res.extra["report"] = report
    return res


RUNNERS = {
    "tradeoff": run_stepsize_grid,
    "completion": run_stepsize_grid,
    "noise_sweep": run_noise_sweep,
    "regret_const": run_regret,
    "regret_adaptive": run_regret,
    "movielens": run_movielens,
    "diagnose": run_diagnose,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    os.makedirs(cfg.out, exist_ok=True)
    return RUNNERS[cfg.experiment](cfg)
