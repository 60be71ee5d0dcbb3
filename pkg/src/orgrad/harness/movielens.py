"""MovieLens 100k ingestion and the online/offline MAE evaluation.

Preprocessing: ratings are centred on the train mean, the centred ratings
matrix ``M`` (users x items) is learned through the entry design, so the
learned tensor is ``T = M / sqrt(d*)``, and predictions ``mean + sqrt(d*) T_ui``
are clipped to ``[1, 5]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..covariates import EntryCovariate
from ..errors import DataFormatError, DimensionError, DivergenceError
from ..glm import LossModel
from ..learner import Fixed, offline_rgrad, run
from ..sampling import Observation
from ..tensor import TuckerTensor, hosvd

N_TRAIN = 80000
SHAPE = (1000, 1700)


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    item_id: int
    rating: float
    timestamp: int


def parse_line(line: str, lineno: int) -> RatingRecord:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) != 4:
        raise DataFormatError(f"expected 4 tab-separated fields, got {len(parts)}", line=lineno)
    try:
        user, item, ts = int(parts[0]), int(parts[1]), int(parts[3])
        rating = float(parts[2])
    except ValueError:
        raise DataFormatError(f"non-numeric field in {line.strip()!r}", line=lineno) from None
    if user < 1 or item < 1:
        raise DataFormatError("ids must be positive", line=lineno)
    if not 1.0 <= rating <= 5.0:
        raise DataFormatError(f"rating {rating} outside [1, 5]", line=lineno)
    return RatingRecord(user, item, rating, ts)


def load_movielens(path, n_train: int = N_TRAIN):
    """Read a ``u.data`` file; return ``(records, train, test)``.

    Records are sorted by timestamp, ties kept in file order; the first
    ``n_train`` records form the training split.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_line(line, n))
    if len(records) <= n_train:
        raise DataFormatError(f"{path}: {len(records)} records, need more than {n_train}")
    # sorted() is stable, so ties keep file order
    records = sorted(records, key=lambda r: r.timestamp)
    return records, records[:n_train], records[n_train:]


def format_record(r: RatingRecord) -> str:
    rating = str(int(r.rating)) if float(r.rating).is_integer() else repr(r.rating)
    return f"{r.user_id}\t{r.item_id}\t{rating}\t{r.timestamp}\n"


def write_ratings(path, records: Sequence[RatingRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for r in records:
            fh.write(format_record(r))


def _check_bounds(records, shape):
    for r in records:
        if r.user_id > shape[0] or r.item_id > shape[1]:
            raise DimensionError(f"record ({r.user_id}, {r.item_id}) outside the {shape[0]}x{shape[1]} matrix")


def to_observations(records, mean: float, shape=SHAPE):
    scale = math.sqrt(shape[0] * shape[1])
    return [Observation(EntryCovariate((r.user_id - 1, r.item_id - 1), scale), r.rating - mean, t)
            for t, r in enumerate(records)]


def predict(estimate: TuckerTensor, records, mean: float, shape=SHAPE) -> np.ndarray:
    U, V = estimate.factors
    rows = np.array([r.user_id - 1 for r in records])
    cols = np.array([r.item_id - 1 for r in records])
    vals = np.einsum("ij,jk,ik->i", U[rows], estimate.core, V[cols])
    return np.clip(mean + math.sqrt(shape[0] * shape[1]) * vals, 1.0, 5.0)


def mae(estimate: TuckerTensor, records, mean: float, shape=SHAPE) -> float:
    truth = np.array([r.rating for r in records])
    return float(np.mean(np.abs(predict(estimate, records, mean, shape) - truth)))


def baseline_mae(train, test) -> float:
    """MAE of the constant train-mean predictor."""
    mean = float(np.mean([r.rating for r in train]))
    return float(np.mean([abs(r.rating - mean) for r in test]))


def spectral_init(observations, shape, rank: int) -> TuckerTensor:
    """Rank-``r`` truncation of the averaged ``y_i X_i`` over the batch."""
    acc = np.zeros(shape)
    for obs in observations:
        acc[obs.covariate.index] += obs.response * obs.covariate.scale
    return hosvd(acc / len(observations), (rank, rank))


def fit_online(train, rank: int, eta: float, shape=SHAPE, passes: int = 1, init=None):
    mean = float(np.mean([r.rating for r in train]))
    obs = to_observations(train, mean, shape)
    T0 = spectral_init(obs, shape, rank) if init is None else init
    model = LossModel("linear")
    T = T0
    for _ in range(passes):
        T, log = run(T, obs, Fixed(eta), model, horizon=len(obs), stride=len(obs))
        if log.diverged:
            break
    return T, mean, log.diverged


def fit_offline(train, rank: int, eta: float, iters: int, shape=SHAPE, init=None):
    mean = float(np.mean([r.rating for r in train]))
    obs = to_observations(train, mean, shape)
    T0 = spectral_init(obs, shape, rank) if init is None else init
    try:
        T = offline_rgrad(obs, (rank, rank), eta, iters, LossModel("linear"), init=T0)
    except DivergenceError:
        return T0, mean, True
    return T, mean, False


def _holdout_split(train, fraction: float):
    n_hold = max(1, int(round(len(train) * fraction)))
    return train[:-n_hold], train[-n_hold:]


def tune(train, rank: int, mode: str, grid, holdout: float, shape=SHAPE, iters: int = 100,
         passes: int = 1):
    """Pick the step size with the lowest MAE on the latest ``holdout`` fraction of train."""
    fit_part, hold = _holdout_split(train, holdout)
    best = None
    for eta in grid:
        if mode == "online":
            T, mean, bad = fit_online(fit_part, rank, eta, shape, passes)
        else:
            T, mean, bad = fit_offline(fit_part, rank, eta, iters, shape)
        if bad:
            continue
        score = mae(T, hold, mean, shape)
        if best is None or score < best[1]:
            best = (eta, score)
    if best is None:
        raise DivergenceError(0, f"every step size in {tuple(grid)} diverged for {mode} r={rank}")
    return best[0]


def movielens_eval(train, test, rank_grid, mode: str, eta_grid, holdout: float = 0.1,
                   shape=SHAPE, iters: int = 100, passes: int = 1, eta: Optional[float] = None):
    """Test MAE per rank for one mode; returns ``{rank: (mae, eta)}``."""
    if mode not in ("online", "offline"):
        raise ValueError(f"unknown mode {mode!r}")
    _check_bounds(train, shape)
    _check_bounds(test, shape)
    out = {}
    for r in rank_grid:
        step = eta if eta is not None else tune(train, r, mode, eta_grid, holdout, shape, iters, passes)
        if mode == "online":
            T, mean, _ = fit_online(train, r, step, shape, passes)
        else:
            T, mean, _ = fit_offline(train, r, step, iters, shape)
        out[r] = (mae(T, test, mean, shape), step)
    return out
