"""End-to-end acceptance checks, one test per numbered criterion.

Each test records a pass/fail line through the ``criterion`` fixture; the
lines are printed together at the end of the pytest run. The long runs are
deliberate: criteria 1 to 6 reproduce the simulation studies at desk scale.

Environment
-----------
ORGRAD_WORKERS : worker processes for the simulation grids (default 1).
ORGRAD_ML100K : path to the MovieLens 100k ``u.data`` file.
ORGRAD_LONG : set to 1 to run the full-size completion run as well.
"""

import math
import os
import time

import numpy as np
import pytest

from orgrad import (
    EntryCovariate,
    Fixed,
    LossModel,
    Observation,
    TruthSpec,
    gen_truth,
    hosvd,
    hosvd_factored,
    init_oracle_perturb,
    materialize,
    matricize,
    orgrad_step,
    project_tangent,
    run,
    stream,
)
from orgrad.harness import build_config, run_experiment
from orgrad.learner import init_state

import oracles

WORKERS = os.environ.get("ORGRAD_WORKERS", "1")
# regression-recipe truth seed with lambda_min = 3.09
REGRESSION_TRUTH_SEED = "29"
SEED = "1"


def experiment(name, out, **overrides):
    values = {"seed": SEED, "out": str(out), "reproducible": "true", "workers": WORKERS}
    values.update({k: str(v) for k, v in overrides.items()})
    cfg = build_config(name, overrides=values)
    start = time.perf_counter()
    res = run_experiment(cfg)
    return res, time.perf_counter() - start


def orderings(summary):
    errs = [r["final_rel_err_mean"] for r in summary]
    plateau = [r["plateau_t"] for r in summary]
    inc = all(a < b for a, b in zip(errs, errs[1:]))
    dec = all(a > b for a, b in zip(plateau, plateau[1:]))
    text = "final rel err " + " < ".join(f"{e:.4g}" for e in errs)
    text += ", plateau t " + " > ".join(str(p) for p in plateau)
    return inc and dec and not any(r["diverged"] for r in summary), text


@pytest.fixture(scope="module")
def completion_run(tmp_path_factory):
    return experiment("completion", tmp_path_factory.mktemp("completion"), dims="40,40,40",
                      horizon=60000, eta="1e-4,2e-4,4e-4", sigma=0.1, init_c=0.3, n_trials=3)


@pytest.fixture(scope="module")
def regret_runs(tmp_path_factory):
    horizons = "5000,10000,20000,40000"
    const = experiment("regret_const", tmp_path_factory.mktemp("regret_const"), horizons=horizons,
                       eta_scale=0.01, n_trials=5)
    adaptive = experiment("regret_adaptive", tmp_path_factory.mktemp("regret_adaptive"),
                          horizons=horizons, eta0=4e-3, t0=1000, n_trials=5)
    return const, adaptive


def test_criterion_1_tradeoff_ordering(criterion, tmp_path):
    res, secs = experiment("tradeoff", tmp_path, truth_seed=REGRESSION_TRUTH_SEED, init_c=0.3)
    ok, text = orderings(res.summary)
    ok = criterion(1, ok and secs <= 600, f"{text}, {secs:.0f} s")
    assert ok


def test_criterion_2_noise_proportionality(criterion, tmp_path):
    res, secs = experiment("noise_sweep", tmp_path, truth_seed=REGRESSION_TRUTH_SEED)
    fit = res.extra["fit"]
    errs = ", ".join(f"{r['fro_err_mean']:.4g}" for r in res.summary)
    ok = fit["r2"] >= 0.9 and secs <= 1200 and not any(r["diverged"] for r in res.summary)
    ok = criterion(2, ok, f"R2 {fit['r2']:.4f} (slope {fit['slope']:.4g}; errors {errs}), {secs:.0f} s")
    assert ok


def test_criterion_3_completion_ordering(criterion, completion_run):
    res, secs = completion_run
    ok, text = orderings(res.summary)
    ok = criterion(3, ok, f"{text}, {secs:.0f} s")
    assert ok


def test_criterion_4_noiseless_recovery(criterion):
    seed = 4
    T, rep = gen_truth(TruthSpec("completion", (20, 20, 20), (2, 2, 2), seed=seed))
    T0 = init_oracle_perturb(T, 0.2, np.random.default_rng(seed))
    horizon = 30000
    obs = stream(T, "entry", LossModel("linear"), horizon, np.random.default_rng(seed + 1))
    _, log = run(T0, obs, Fixed(1e-3), LossModel("linear"), truth=T, horizon=horizon,
                 track_regret=False, record_sup=False)
    final = log.final("rel_err")
    ok = criterion(4, final <= 1e-4 and not log.diverged,
                   f"rel err {log.column('rel_err')[0]:.3g} -> {final:.3g} after {horizon} steps "
                   f"(eta 1e-3, seed {seed})")
    assert ok


def test_criterion_5_constant_regret(criterion, regret_runs):
    (res, secs), _ = regret_runs
    fit = res.extra["fit"]
    regrets = ", ".join(f"{r['regret_mean']:.4g}" for r in res.summary)
    ok = criterion(5, fit["r2"] >= 0.95 and not any(r["diverged"] for r in res.summary),
                   f"R2 vs sqrt(T) {fit['r2']:.4f} (regret {regrets}), {secs:.0f} s")
    assert ok


def test_criterion_6_adaptive_regret(criterion, regret_runs):
    (const, _), (res, secs) = regret_runs
    fit = res.extra["fit"]
    last_adaptive = res.summary[-1]["regret_mean"]
    last_const = const.summary[-1]["regret_mean"]
    regrets = ", ".join(f"{r['regret_mean']:.4g}" for r in res.summary)
    ok = fit["r2"] >= 0.9 and last_adaptive < last_const
    ok = criterion(6, ok, f"R2 vs log(T) {fit['r2']:.4f} (regret {regrets}); at T=40000 adaptive "
                          f"{last_adaptive:.4g} vs constant {last_const:.4g}, {secs:.0f} s")
    assert ok


def _ml100k_path():
    path = os.environ.get("ORGRAD_ML100K") or os.path.join(os.path.dirname(__file__), "..", "data",
                                                          "ml-100k", "u.data")
    return path if os.path.exists(path) else None


def test_criterion_7_movielens(criterion):
    path = _ml100k_path()
    if path is None:
        criterion.skip(7, "ml-100k u.data not found (set ORGRAD_ML100K)")
    from orgrad.harness.config import ExperimentConfig
    from orgrad.harness.movielens import baseline_mae, load_movielens, movielens_eval

    defaults = ExperimentConfig("movielens")
    _, train, test = load_movielens(path)
    base = baseline_mae(train, test)
    online = movielens_eval(train, test, (10,), "online", defaults.eta_grid, defaults.holdout)[10]
    offline = movielens_eval(train, test, (10,), "offline", defaults.offline_eta_grid, defaults.holdout,
                             iters=defaults.offline_iters)[10]
    ok = (abs(online[0] - 0.4808) <= 0.03 and abs(offline[0] - 0.4635) <= 0.03
          and online[0] < base and offline[0] < base)
    ok = criterion(7, ok, f"online {online[0]:.4f} (eta {online[1]:g}), offline {offline[0]:.4f} "
                          f"(eta {offline[1]:g}), baseline {base:.4f}")
    assert ok


def test_criterion_8_oracles(criterion):
    rng = np.random.default_rng(80)
    start = time.perf_counter()
    worst = {}
    # (a) factored HOSVD against dense brute force
    err = 0.0
    for _ in range(50):
        dims = tuple(int(rng.integers(2, d + 1)) for d in (6, 5, 4))
        wide = tuple(int(rng.integers(1, d + 1)) for d in dims)
        ranks = tuple(int(rng.integers(1, w + 1)) for w in wide)
        core = rng.standard_normal(wide)
        factors = [rng.standard_normal((d, w)) for d, w in zip(dims, wide)]
        dense = oracles.contract_all(core, factors)
        got = materialize(hosvd_factored(core, factors, ranks))
        err = max(err, np.max(np.abs(got - oracles.brute_hosvd(dense, ranks))))
    worst["a"] = err
    # (b) tangent projection against the explicit basis
    err = 0.0
    for _ in range(10):
        P = hosvd(rng.standard_normal((4, 3, 2)), (2, 2, 2))
        X = rng.standard_normal(P.dims)
        ref = oracles.basis_projection(P.core, P.factors, X)
        err = max(err, np.max(np.abs(project_tangent(P, X).materialize() - ref)))
    worst["b"] = err
    # (c) derivative against central differences
    err = 0.0
    for model in (LossModel("linear", sigma=1.0), LossModel("logistic"), LossModel("poisson")):
        theta = rng.uniform(-3, 3, 1000)
        y = model.sample_response(theta, rng)
        h = 1e-5
        fd = (model.loss(theta + h, y) - model.loss(theta - h, y)) / (2 * h)
        d = model.dloss(theta, y)
        err = max(err, float(np.max(np.abs(d - fd) / np.maximum(1.0, np.abs(d)))))
    worst["c"] = err
    # (d) one entry-design step against the dense reference
    err = 0.0
    for _ in range(10):
        T0 = hosvd(rng.standard_normal((5, 4, 3)), (2, 2, 2))
        idx = tuple(int(rng.integers(d)) for d in T0.dims)
        X = EntryCovariate(idx, math.sqrt(60))
        y = float(rng.standard_normal())
        out = orgrad_step(init_state(T0, Fixed(0.01), LossModel("linear")), Observation(X, y, 0))
        ref = oracles.dense_step(T0.core, T0.factors, X.dense(T0.dims), y, 0.01, LossModel("linear").dloss)
        err = max(err, np.max(np.abs(materialize(out.estimate) - ref)))
    worst["d"] = err
    secs = time.perf_counter() - start
    ok = worst["a"] <= 1e-10 and worst["b"] <= 1e-10 and worst["c"] <= 1e-6 and worst["d"] <= 1e-10
    ok = criterion(8, ok and secs < 30, ", ".join(f"({k}) {v:.2g}" for k, v in worst.items()) + f", {secs:.1f} s")
    assert ok


def test_criterion_9_invariants(criterion):
    rng = np.random.default_rng(90)
    checks = {}
    P = hosvd(rng.standard_normal((6, 5, 4)), (2, 2, 2))
    X, Y = rng.standard_normal(P.dims), rng.standard_normal(P.dims)
    xi = project_tangent(P, X).materialize()
    checks["rank<=2r"] = all(np.linalg.matrix_rank(matricize(xi, j), tol=1e-9) <= 2 * r
                             for j, r in enumerate(P.ranks))
    idem = np.max(np.abs(project_tangent(P, xi).materialize() - xi))
    adj = abs(np.sum(xi * Y) - np.sum(X * project_tangent(P, Y).materialize()))
    checks["idempotent+self-adjoint"] = idem <= 1e-10 and adj <= 1e-10
    alpha, n = 5.0, 10_000
    sandwich, unbiased = True, True
    for model in (LossModel("linear"), LossModel("logistic"), LossModel("poisson")):
        gamma, mu, _ = model.regularity_constants(alpha)
        t1, t2 = rng.uniform(-alpha, alpha, n), rng.uniform(-alpha, alpha, n)
        y = model.sample_response(rng.uniform(-alpha, alpha, n), rng)
        mid = (t1 - t2) * (model.dloss(t1, y) - model.dloss(t2, y))
        sq = (t1 - t2) ** 2
        sandwich &= bool(np.all(gamma * sq <= mid + 1e-12 * sq) and np.all(mid <= mu * sq + 1e-12 * sq))
        theta = np.full(1_000_000, 0.4)
        g = model.dloss(theta, model.sample_response(theta, rng))
        unbiased &= bool(abs(g.mean()) <= 4 * g.std() / math.sqrt(g.size))
    checks["sandwich"] = sandwich
    checks["unbiased"] = unbiased
    ratio = 0.0
    for _ in range(5):
        A = rng.standard_normal((6, 5, 4))
        best = np.linalg.norm(A - oracles.hooi(A, (2, 2, 2), iters=50))
        ratio = max(ratio, np.linalg.norm(A - materialize(hosvd(A, (2, 2, 2)))) / best)
    checks["quasi-optimal"] = ratio <= math.sqrt(3)
    ok = criterion(9, all(checks.values()),
                   ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
                   + f" (HOSVD/HOOI ratio {ratio:.3f})")
    assert ok


def test_criterion_10_incoherence(criterion, completion_run):
    res, _ = completion_run
    rep = res.extra["truth_report"]
    bound = 20 * rep.kappa0**2 * rep.incoherence
    worst = max(max(log.records["incoh"]) for logs in res.extra["logs"].values() for log in logs)
    ok = criterion(10, worst <= bound, f"max logged incoherence {worst:.3f} <= bound {bound:.1f} "
                                       f"(kappa0 {rep.kappa0:.3f}, mu {rep.incoherence:.3f})")
    assert ok


def test_criterion_11_entrywise_spread(criterion, completion_run):
    res, _ = completion_run
    worst_ratio, detail = 0.0, ""
    m, r_star = 3, 8
    d_star = 40**3
    for eta, logs in res.extra["logs"].items():
        for log in logs:
            mu0 = max(log.records["incoh"])
            lhs = math.sqrt(d_star) * log.final("sup_err") / log.final("fro_err")
            rhs = 10 * math.sqrt(mu0**m * r_star)
            if lhs / rhs > worst_ratio:
                worst_ratio, detail = lhs / rhs, f"{lhs:.3f} <= {rhs:.2f} (eta {eta:g}, mu0 {mu0:.3f})"
    ok = criterion(11, worst_ratio <= 1.0, f"worst case {detail}")
    assert ok


@pytest.mark.skipif(os.environ.get("ORGRAD_LONG") != "1", reason="set ORGRAD_LONG=1 for the full-size run")
def test_full_size_completion_ordering(tmp_path):
    res, _ = experiment("completion", tmp_path)
    ok, text = orderings(res.summary)
    assert ok, text
