import math

import numpy as np
import pytest

from orgrad import (
    CalibrationError,
    ConfigError,
    DenseCovariate,
    EntryCovariate,
    LossModel,
    TruthSpec,
    draw_covariate,
    fro_distance,
    gen_truth,
    hosvd,
    init_oracle_perturb,
    init_second_moment,
    materialize,
    stream,
    thin_svd,
    trial_rng,
)
from orgrad.sampling import moment_average, stream_sigma_grid

# recorded seed whose regression-recipe truth has lambda_min = 3.09
REGRESSION_SEED = 29


def test_entry_inner_product_identity():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((3, 4, 2))
    X = draw_covariate("entry", M.shape, rng)
    assert isinstance(X, EntryCovariate)
    assert X.scale == pytest.approx(math.sqrt(24))
    assert X.inner(M) == math.sqrt(24) * M[X.index]
    assert np.sum(X.dense(M.shape) * M) == pytest.approx(X.inner(M))


def test_entry_second_moment():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((3, 4, 2))
    vals = np.array([draw_covariate("entry", M.shape, rng).inner(M) ** 2 for _ in range(100_000)])
    target = np.sum(M**2)
    assert abs(vals.mean() - target) <= 3 * vals.std() / math.sqrt(vals.size)


def test_gaussian_design_moments():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((3, 3))
    vals = np.array([draw_covariate("gaussian", M.shape, rng).inner(M) for _ in range(20_000)])
    se = vals.std() / math.sqrt(vals.size)
    assert abs(vals.mean()) <= 4 * se
    sq = vals**2
    assert abs(sq.mean() - np.sum(M**2)) <= 4 * sq.std() / math.sqrt(sq.size)
    with pytest.raises(ConfigError):
        draw_covariate("sparse", (2, 2), rng)


def test_truth_recipes():
    T, rep = gen_truth(TruthSpec("regression", (30, 30, 30), (2, 2, 2), seed=0))
    assert T.ranks == (2, 2, 2) and rep.lambda_min > 0
    T, rep = gen_truth(TruthSpec("completion", (20, 20, 20), (2, 2, 2), seed=0))
    assert rep.incoherence >= 1
    with pytest.raises(ConfigError):
        gen_truth(TruthSpec("other", (3, 3), (1, 1)))


def test_regression_truth_lambda_min_scale():
    # typical value near 2.3 within a factor 3, for a recorded seed
    _, rep = gen_truth(TruthSpec("regression", (30, 30, 30), (2, 2, 2), seed=REGRESSION_SEED))
    assert 2.3 / 3 <= rep.lambda_min <= 2.3 * 3


def test_matrix_truth_lambda_min_and_optimality():
    T, rep = gen_truth(TruthSpec("matrix", (30, 30), (2, 2), seed=0))
    assert 9.4 / 1.5 <= rep.lambda_min <= 9.4 * 1.5
    src = np.random.default_rng(0).standard_normal((30, 30))
    s = np.linalg.svd(src, compute_uv=False)
    residual = np.linalg.norm(src - materialize(T))
    assert residual == pytest.approx(math.sqrt(np.sum(s[2:] ** 2)), rel=1e-10)
    U, sv, V = thin_svd(src, 2)
    np.testing.assert_allclose(materialize(T), U * sv @ V.T, atol=1e-10)


def test_explicit_truth():
    X = np.random.default_rng(3).standard_normal((4, 3, 2))
    T, _ = gen_truth(TruthSpec("explicit", (4, 3, 2), (2, 2, 2), tensor=X))
    np.testing.assert_allclose(materialize(T), materialize(hosvd(X, (2, 2, 2))))


def test_stream_noiseless_and_deterministic():
    T, _ = gen_truth(TruthSpec("completion", (5, 4, 3), (2, 2, 2), seed=1))
    dense = materialize(T)
    obs = list(stream(T, "gaussian", LossModel("linear"), 20, np.random.default_rng(4)))
    for o in obs:
        assert o.response == pytest.approx(np.sum(o.covariate.tensor * dense))
    again = list(stream(T, "gaussian", LossModel("linear"), 20, np.random.default_rng(4)))
    assert all(np.array_equal(a.covariate.tensor, b.covariate.tensor) for a, b in zip(obs, again))
    other = list(stream(T, "gaussian", LossModel("linear"), 3, trial_rng(4, 1)))
    assert not np.array_equal(other[0].covariate.tensor, obs[0].covariate.tensor)


def test_stream_is_lazy():
    T, _ = gen_truth(TruthSpec("completion", (5, 4, 3), (2, 2, 2), seed=1))
    gen = stream(T, "gaussian", LossModel("linear"), 10**9, np.random.default_rng(0))
    assert next(gen).t == 0 and next(gen).t == 1


def test_binary_entry_stream_rates():
    rng = np.random.default_rng(5)
    T, _ = gen_truth(TruthSpec("completion", (2, 2), (1, 1), seed=2))
    model = LossModel("logistic")
    counts, ones = {}, {}
    for o in stream(T, "entry", model, 40_000, rng):
        assert o.response in (0.0, 1.0)
        counts[o.covariate.index] = counts.get(o.covariate.index, 0) + 1
        ones[o.covariate.index] = ones.get(o.covariate.index, 0) + o.response
    dense = materialize(T)
    for idx, n in counts.items():
        p = float(model.link(2.0 * dense[idx]))
        assert abs(ones[idx] / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("seed", range(20))
def test_oracle_perturb_band(seed):
    T, rep = gen_truth(TruthSpec("regression", (8, 7, 6), (2, 2, 2), seed=seed))
    c = 0.3
    T0 = init_oracle_perturb(T, c, np.random.default_rng(seed))
    ratio = fro_distance(T0, T) / rep.lambda_min
    assert 0.8 * c <= ratio <= c
    assert T0.ranks == T.ranks


def test_oracle_perturb_limits():
    T, _ = gen_truth(TruthSpec("regression", (6, 5, 4), (2, 2, 2), seed=0))
    T0 = init_oracle_perturb(T, 1e-9, np.random.default_rng(0))
    assert np.max(np.abs(materialize(T0) - materialize(T))) < 1e-6
    with pytest.raises(ValueError):
        init_oracle_perturb(T, 0.5, np.random.default_rng(0))
    with pytest.raises(CalibrationError):
        init_oracle_perturb(T, 0.3, np.random.default_rng(0), max_steps=1)


def test_second_moment_unbiased_before_truncation():
    T, _ = gen_truth(TruthSpec("completion", (3, 3, 3), (1, 1, 1), seed=3))
    dense = materialize(T)
    rng = np.random.default_rng(6)
    n, reps = 400, 300
    avgs = np.array([moment_average(list(stream(T, "entry", LossModel("linear"), n, rng)), T.dims)
                     for _ in range(reps)])
    se = avgs.std(axis=0) / math.sqrt(reps)
    assert np.all(np.abs(avgs.mean(axis=0) - dense) <= 4 * se + 1e-12)


def test_second_moment_improves_with_samples():
    T, _ = gen_truth(TruthSpec("regression", (10, 10, 10), (2, 2, 2), seed=4))
    rng = np.random.default_rng(7)
    errs = []
    for n in (500, 2000, 8000):
        obs = list(stream(T, "gaussian", LossModel("linear"), n, rng))
        errs.append(fro_distance(init_second_moment(obs, T.dims, T.ranks), T) / T.fro_norm())
    assert errs[0] > errs[1] > errs[2]


def test_second_moment_single_entry_observation():
    T, _ = gen_truth(TruthSpec("completion", (3, 3, 3), (1, 1, 1), seed=3))
    obs = list(stream(T, "entry", LossModel("linear"), 1, np.random.default_rng(0)))
    T0 = init_second_moment(obs, T.dims, (1, 1, 1))
    assert np.count_nonzero(np.abs(materialize(T0)) > 1e-12) == 1
    with pytest.raises(ValueError):
        init_second_moment([], T.dims, (1, 1, 1))


def test_dense_covariate_inner_on_tucker():
    T, _ = gen_truth(TruthSpec("completion", (4, 3, 2), (2, 2, 2), seed=5))
    X = DenseCovariate(np.random.default_rng(8).standard_normal(T.dims))
    assert X.inner(T) == pytest.approx(np.sum(X.tensor * materialize(T)))



def test_sigma_grid_stream_matches_separate_streams():
    T, _ = gen_truth(TruthSpec("completion", (4, 3, 3), (2, 2, 2), seed=6))
    sigmas = (0.0, 0.5, 2.0)
    shared = list(stream_sigma_grid(T, "gaussian", sigmas, 25, trial_rng(3, 0, 1)))
    for k, s in enumerate(sigmas):
        alone = list(stream(T, "gaussian", LossModel("linear", sigma=s), 25, trial_rng(3, 0, 1)))
        for a, b in zip(alone, shared):
            assert np.array_equal(a.covariate.tensor, b[k].covariate.tensor)
            assert a.response == b[k].response and a.mean == b[k].mean
