"""Covariate designs, ground-truth generators, response streams and warm starts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .covariates import DenseCovariate, EntryCovariate
from .errors import CalibrationError, ConfigError, DimensionError
from .glm import LossModel
from .manifold import SpectralReport, spectral_report
from .tensor import TuckerTensor, as_tensor, fro_distance, hosvd, hosvd_factored, materialize

DESIGNS = ("gaussian", "entry")
RECIPES = ("regression", "completion", "matrix", "explicit")


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one (grid point, trial, ...) key under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


def draw_covariate(design: str, dims: Sequence[int], rng: np.random.Generator):
    """One covariate: iid N(0,1) entries, or ``sqrt(d*) E_omega`` with omega uniform."""
    dims = tuple(dims)
    if design == "gaussian":
        return DenseCovariate(rng.standard_normal(dims))
    if design == "entry":
        size = int(np.prod(dims))
        flat = int(rng.integers(size))
        index = tuple(int(i) for i in np.unravel_index(flat, dims))
        return EntryCovariate(index, float(np.sqrt(size)))
    raise ConfigError(f"unknown design {design!r}; expected one of {DESIGNS}")


@dataclass(frozen=True)
class Observation:
    covariate: object
    response: float
    t: int
    # E[Y_t] when the stream is simulated from a known truth
    mean: Optional[float] = None


@dataclass(frozen=True)
class TruthSpec:
    recipe: str
    dims: tuple
    ranks: tuple
    seed: int = 0
    tensor: object = None


def gen_truth(spec: TruthSpec):
    """Generate a ground truth and its spectral report.

    Recipes
    -------
    regression : core iid N(0,1), factors iid Unif(0,1) (not orthonormalized),
        stored afterwards in orthonormal Tucker form.
    completion : HOSVD of a tensor with iid Unif(0,1) entries.
    matrix : hard rank truncation of an iid N(0,1) array (any order; order 2 in use).
    explicit : ``spec.tensor`` (dense or Tucker) re-expressed by HOSVD.
    """
    dims, ranks = tuple(spec.dims), tuple(spec.ranks)
    if len(dims) != len(ranks):
        raise DimensionError(f"dims {dims} and ranks {ranks} differ in arity")
    rng = np.random.default_rng(spec.seed)
    if spec.recipe == "regression":
        core = rng.standard_normal(ranks)
        factors = [rng.uniform(0.0, 1.0, size=(d, r)) for d, r in zip(dims, ranks)]
        truth = hosvd_factored(core, factors, ranks)
    elif spec.recipe == "completion":
        truth = hosvd(rng.uniform(0.0, 1.0, size=dims), ranks)
    elif spec.recipe == "matrix":
        truth = hosvd(rng.standard_normal(dims), ranks)
    elif spec.recipe == "explicit":
        if spec.tensor is None:
            raise ConfigError("explicit recipe needs a tensor")
        dense = materialize(spec.tensor) if isinstance(spec.tensor, TuckerTensor) else as_tensor(spec.tensor)
        if dense.shape != dims:
            raise DimensionError(f"explicit tensor has dims {dense.shape}, expected {dims}")
        truth = hosvd(dense, ranks)
    else:
        raise ConfigError(f"unknown recipe {spec.recipe!r}; expected one of {RECIPES}")
    return truth, spectral_report(truth)


def stream(truth: TuckerTensor, design: str, model: LossModel, horizon: int,
           rng: np.random.Generator) -> Iterator[Observation]:
    """Lazily yield ``horizon`` iid observations ``(X_t, Y_t)`` from ``truth``."""
    dims = truth.dims
    dense_truth = materialize(truth)
    for t in range(horizon):
        X = draw_covariate(design, dims, rng)
        if isinstance(X, EntryCovariate):
            theta = X.scale * float(dense_truth[X.index])
        else:
            theta = float(np.vdot(X.tensor, dense_truth))
        y = model.sample_response(theta, rng)
        yield Observation(X, y, t, float(model.mean(theta)))


def stream_sigma_grid(truth: TuckerTensor, design: str, sigmas: Sequence[float], horizon: int,
                      rng: np.random.Generator) -> Iterator[tuple]:
    """Linear-model streams for several noise levels sharing one set of draws.

    Yields one tuple of observations per step, one per ``sigma``. Each
    component equals what ``stream`` yields for ``LossModel("linear", sigma)``
    from the same generator state, at the cost of a single covariate draw.
    """
    dims = truth.dims
    dense_truth = materialize(truth)
    sigmas = [float(s) for s in sigmas]
    for t in range(horizon):
        X = draw_covariate(design, dims, rng)
        if isinstance(X, EntryCovariate):
            theta = X.scale * float(dense_truth[X.index])
        else:
            theta = float(np.vdot(X.tensor, dense_truth))
        z = rng.standard_normal(())
        yield tuple(Observation(X, float(np.asarray(theta, dtype=float) + s * z), t, theta) for s in sigmas)


def init_oracle_perturb(truth: TuckerTensor, c: float, rng: np.random.Generator,
                        lambda_min: Optional[float] = None, max_steps: int = 50) -> TuckerTensor:
    """Warm start ``HOSVD_r(T* + delta N)`` with ``||T0 - T*||_F`` in ``[0.8c, c] * lambda_min``.

    ``N`` is a unit-Frobenius iid Gaussian direction and ``delta`` is found by
    bisection.
    """
    if not 0 < c < 0.5:
        raise ValueError("c must lie in (0, 1/2)")
    lam = spectral_report(truth).lambda_min if lambda_min is None else lambda_min
    lo_target, hi_target = 0.8 * c * lam, c * lam
    dense = materialize(truth)
    noise = rng.standard_normal(dense.shape)
    noise /= np.linalg.norm(noise.ravel())

    def attempt(delta):
        cand = hosvd(dense + delta * noise, truth.ranks)
        return cand, fro_distance(cand, truth)

    lo, hi = 0.0, hi_target
    for _ in range(max_steps):
        cand, err = attempt(hi)
        if lo_target <= err <= hi_target:
            return cand
        if err > hi_target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise CalibrationError("could not bracket the perturbation size")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        cand, err = attempt(mid)
        if lo_target <= err <= hi_target:
            return cand
        if err < lo_target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not reach [{lo_target:.3g}, {hi_target:.3g}] in {max_steps} steps")


def init_second_moment(observations: Sequence[Observation], dims: Sequence[int],
                       ranks: Sequence[int]) -> TuckerTensor:
    """Spectral warm start ``HOSVD_r(mean_i y_i X_i)``.

    ``E[y X] = T*`` under both designs (``E[X (x) X]`` is the identity), so the
    averaged tensor is an unbiased estimate of the truth before truncation.
    """
    averaged = moment_average(observations, dims)
    return hosvd(averaged, ranks)


def moment_average(observations: Sequence[Observation], dims: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    if len(observations) == 0:
        raise ValueError("initialization needs at least one observation")
    acc = np.zeros(dims)
    for obs in observations:
        X = obs.covariate
        if isinstance(X, EntryCovariate):
            acc[X.index] += obs.response * X.scale
        else:
            acc += obs.response * X.tensor
    return acc / len(observations)
