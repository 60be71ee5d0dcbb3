"""Online Riemannian gradient descent, its adaptive schedule, and trajectory metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .covariates import DenseCovariate, EntryCovariate
from .errors import DimensionError, DivergenceError, NonFiniteError, OrgradError
from .glm import LossModel
from .manifold import incoherence, project_tangent, retract
from .tensor import TuckerTensor, as_tensor, fro_distance, materialize

LOG_COLUMNS = ("t", "eta", "fro_err", "rel_err", "sup_err", "incoh", "regret")
MAX_RECORDS = 2000


@dataclass(frozen=True)
class Fixed:
    eta: float

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("step size must be non-negative")


@dataclass(frozen=True)
class Adaptive:
    """Phase-doubling schedule: phase ``k`` lasts ``2^(k-1) t0`` steps at ``2^-k eta0``."""

    eta0: float
    t0: int

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if int(self.t0) != self.t0 or self.t0 < 1:
            raise ValueError("t0 must be a positive integer")


def phase_at(schedule: Adaptive, t: int) -> int:
    # phase k covers (2^(k-1) - 1) t0 <= t < (2^k - 1) t0, i.e. 2^(k-1) <= (t + t0) // t0 < 2^k
    return ((int(t) + schedule.t0) // schedule.t0).bit_length()


def step_size_at(schedule, t: int) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(schedule, Fixed):
        return schedule.eta
    if isinstance(schedule, Adaptive):
        return math.ldexp(schedule.eta0, -phase_at(schedule, t))
    raise TypeError(f"unknown schedule {schedule!r}")


@dataclass(frozen=True)
class LearnerState:
    estimate: TuckerTensor
    t: int
    schedule: object
    model: LossModel
    ranks: tuple
    # prediction made at the last step, before its update
    prediction: Optional[float] = None


def init_state(estimate: TuckerTensor, schedule, model: LossModel) -> LearnerState:
    return LearnerState(estimate, 0, schedule, model, estimate.ranks)


def _covariate_dims_ok(point: TuckerTensor, X) -> bool:
    if isinstance(X, EntryCovariate):
        return len(X.index) == point.order and all(0 <= i < d for i, d in zip(X.index, point.dims))
    return X.tensor.shape == point.dims


def _as_covariate(X):
    if isinstance(X, (DenseCovariate, EntryCovariate)):
        return X
    return DenseCovariate(as_tensor(X))


def orgrad_step(state: LearnerState, obs) -> LearnerState:
    """One oRGrad update ``T <- HOSVD_r(T - eta P_T(h'(<X, T>, y) X))``.

    The prediction ``<X_t, T_t>`` is formed from the current estimate before
    the response enters the update and is stored on the returned state.

    Raises
    ------
    DivergenceError
        If the prediction, the loss derivative or the new estimate is not finite.
    """
    T = state.estimate
    X = _as_covariate(obs.covariate)
    if not _covariate_dims_ok(T, X):
        raise DimensionError(f"covariate does not match estimate dims {T.dims}")
    eta = step_size_at(state.schedule, state.t)
    if isinstance(X, EntryCovariate):
        proj = None
        theta = X.inner(T)
    else:
        # <X, T> = <X x_j U_j^T, C>, and the projection computes X x_j U_j^T anyway
        proj = project_tangent(T, X)
        theta = float(np.vdot(proj.core_part, T.core))
    if not math.isfinite(theta):
        raise DivergenceError(state.t, f"non-finite prediction at step {state.t}")
    g = float(state.model.dloss(theta, obs.response))
    if not math.isfinite(g):
        raise DivergenceError(state.t, f"non-finite loss derivative at step {state.t}")
    if g == 0.0 or eta == 0.0:
        return replace(state, t=state.t + 1, prediction=theta)
    if proj is None:
        proj = project_tangent(T, X)
    try:
        new = retract(T, proj.scaled(g), eta)
    except (NonFiniteError, np.linalg.LinAlgError) as exc:
        raise DivergenceError(state.t, f"retraction failed at step {state.t}: {exc}") from exc
    if not np.all(np.isfinite(new.core)):
        raise DivergenceError(state.t, f"non-finite core at step {state.t}")
    return replace(state, estimate=new, t=state.t + 1, prediction=theta)


@dataclass
class TrajectoryLog:
    """Recorded metrics plus per-step predictions.

    ``records`` maps each column of ``LOG_COLUMNS`` to an array over the
    recorded steps. Per-step arrays have one entry per processed observation.
    Error columns are NaN when no truth was supplied.
    """

    stride: int
    records: dict = field(default_factory=lambda: {c: [] for c in LOG_COLUMNS})
    predictions: list = field(default_factory=list)
    means: list = field(default_factory=list)
    sq_err: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: Optional[int] = None
    message: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.records[name], dtype=float)

    @property
    def n_steps(self) -> int:
        return len(self.predictions)

    def rows(self):
        cols = [self.records[c] for c in LOG_COLUMNS]
        for vals in zip(*cols):
            yield dict(zip(LOG_COLUMNS, vals))

    def final(self, name: str) -> float:
        return float(self.records[name][-1])


def default_stride(horizon: int) -> int:
    return max(1, horizon // MAX_RECORDS)


def _record(log, t, eta, T, truth, truth_dense, truth_norm, sq_sum):
    rec = log.records
    rec["t"].append(int(t))
    rec["eta"].append(float(eta))
    rec["incoh"].append(max(incoherence(U) for U in T.factors))
    rec["regret"].append(0.5 * sq_sum)
    if truth is None:
        for c in ("fro_err", "rel_err", "sup_err"):
            rec[c].append(math.nan)
        return
    fro = fro_distance(T, truth)
    rec["fro_err"].append(fro)
    rec["rel_err"].append(fro / truth_norm)
    sup = math.nan if truth_dense is None else float(np.max(np.abs(materialize(T) - truth_dense)))
    rec["sup_err"].append(sup)


class Runner:
    """Step-by-step driver behind :func:`run`.

    Lets several learners consume one shared stream in lockstep. ``feed``
    returns False once the learner has diverged; ``finish`` closes the log.
    """

    def __init__(self, init: TuckerTensor, schedule, model: LossModel, truth: Optional[TuckerTensor] = None,
                 horizon: int = MAX_RECORDS, stride: Optional[int] = None, record_sup: bool = True,
                 track_regret: bool = True):
        if stride is None:
            stride = default_stride(horizon)
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.log = TrajectoryLog(stride=stride)
        self.state = init_state(init, schedule, model)
        self.truth = truth
        self.track = truth is not None and track_regret
        self.truth_dense = materialize(truth) if truth is not None and record_sup else None
        self.truth_norm = truth.fro_norm() if truth is not None else math.nan
        self.sq_sum = 0.0
        self._record()

    def _record(self):
        st = self.state
        _record(self.log, st.t, step_size_at(st.schedule, st.t), st.estimate, self.truth, self.truth_dense,
                self.truth_norm, self.sq_sum)

    def feed(self, obs) -> bool:
        log = self.log
        if log.diverged:
            return False
        if self.track:
            err = fro_distance(self.state.estimate, self.truth)
            sq = err * err
        else:
            sq = math.nan
        try:
            new_state = orgrad_step(self.state, obs)
        except DivergenceError as exc:
            log.diverged, log.diverged_at, log.message = True, exc.t, str(exc)
            return False
        log.sq_err.append(sq)
        if self.track:
            self.sq_sum += sq
        log.predictions.append(new_state.prediction)
        log.means.append(obs.mean if getattr(obs, "mean", None) is not None else math.nan)
        self.state = new_state
        if new_state.t % log.stride == 0:
            self._record()
        return True

    def finish(self):
        if self.log.records["t"][-1] != self.state.t:
            self._record()
        return self.state.estimate, self.log


def run(init: TuckerTensor, observations: Iterable, schedule, model: LossModel,
        truth: Optional[TuckerTensor] = None, horizon: Optional[int] = None,
        stride: Optional[int] = None, record_sup: bool = True, track_regret: bool = True):
    """Drive oRGrad through a stream.

    Parameters
    ----------
    init : TuckerTensor
        Warm start; its ranks are the learner's ranks.
    observations : iterable of Observation
        Consumed lazily, one step per item.
    schedule : Fixed or Adaptive
    model : LossModel
    truth : TuckerTensor, optional
        Enables error and regret columns.
    horizon : int, optional
        Expected stream length, used for the default stride. Taken from
        ``len(observations)`` when available.
    stride : int, optional
        Recording interval; the final step is always recorded.
    record_sup : bool
        Record the sup-norm error (densifies the estimate at each record).
    track_regret : bool
        Compute ``||T_t - T*||_F`` at every step for the regret columns; when
        off, ``sq_err`` holds NaN and the regret column stays at 0.

    Returns
    -------
    (TuckerTensor, TrajectoryLog)
        On divergence the last finite estimate is returned and the log is
        flagged instead of raising.
    """
    if horizon is None:
        horizon = len(observations) if hasattr(observations, "__len__") else MAX_RECORDS
    runner = Runner(init, schedule, model, truth, horizon, stride, record_sup, track_regret)
    for obs in observations:
        if not runner.feed(obs):
            break
    return runner.finish()


def regret_explicit(log: TrajectoryLog, start: int = 0, stop: Optional[int] = None) -> float:
    """``(1/2) sum_{start <= t < stop} ||T_t - T*||_F^2`` along the trajectory."""
    sq = np.asarray(log.sq_err[start:stop], dtype=float)
    if sq.size and np.isnan(sq).any():
        raise OrgradError("regret needs a known truth")
    return float(0.5 * np.sum(sq))


def regret_prediction(log: TrajectoryLog, start: int = 0, stop: Optional[int] = None) -> float:
    """Prediction-gap form ``(1/2) sum_t (Yhat_t - E Y_t)^2`` (linear model)."""
    pred = np.asarray(log.predictions[start:stop], dtype=float)
    mean = np.asarray(log.means[start:stop], dtype=float)
    if mean.size and np.isnan(mean).any():
        raise OrgradError("regret needs the true means of the stream")
    return float(0.5 * np.sum((pred - mean) ** 2))


def regret_curve(log: TrajectoryLog) -> np.ndarray:
    """Cumulative explicit-form regret after each step."""
    return 0.5 * np.cumsum(np.asarray(log.sq_err, dtype=float))


class _BatchOperator:
    """Sampling operator of a batch: ``T -> (<X_i, T>)_i`` and its adjoint."""

    def __init__(self, batch, dims):
        self.dims = tuple(dims)
        self.n = len(batch)
        entry = [isinstance(obs.covariate, EntryCovariate) for obs in batch]
        self.entry_pos = np.flatnonzero(entry)
        self.dense_pos = np.flatnonzero(~np.asarray(entry, dtype=bool))
        m = len(self.dims)
        self.idx = tuple(np.array([batch[i].covariate.index[j] for i in self.entry_pos], dtype=np.intp)
                         for j in range(m))
        self.scale = np.array([batch[i].covariate.scale for i in self.entry_pos], dtype=float)
        self.X = (np.stack([_as_covariate(batch[i].covariate).tensor.ravel() for i in self.dense_pos])
                  if self.dense_pos.size else None)

    def forward(self, dense: np.ndarray) -> np.ndarray:
        out = np.empty(self.n)
        if self.entry_pos.size:
            out[self.entry_pos] = self.scale * dense[self.idx]
        if self.X is not None:
            out[self.dense_pos] = self.X @ dense.ravel()
        return out

    def adjoint_mean(self, g: np.ndarray) -> np.ndarray:
        G = np.zeros(self.dims)
        if self.entry_pos.size:
            np.add.at(G, self.idx, g[self.entry_pos] * self.scale)
        if self.X is not None:
            G += (g[self.dense_pos] @ self.X).reshape(self.dims)
        return G / self.n


def offline_rgrad(batch, ranks, eta: float, iters: int, model: LossModel,
                  init: Optional[TuckerTensor] = None, callback=None) -> TuckerTensor:
    """Full-batch Riemannian gradient descent ``T <- HOSVD_r(T - eta P_T(mean_i grad_i))``.

    Without ``init`` the spectral warm start on the same batch is used.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("offline RGrad needs a non-empty batch")
    if eta < 0:
        raise ValueError("step size must be non-negative")
    first = _as_covariate(batch[0].covariate)
    if init is None:
        from .sampling import init_second_moment
        dims = first.tensor.shape if isinstance(first, DenseCovariate) else None
        if dims is None:
            raise ValueError("entry-design batches need an explicit init (dims unknown)")
        init = init_second_moment(batch, dims, ranks)
    T = init
    op = _BatchOperator(batch, T.dims)
    y = np.array([obs.response for obs in batch], dtype=float)
    for k in range(iters):
        theta = op.forward(materialize(T))
        g = np.asarray(model.dloss(theta, y), dtype=float)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(k, f"non-finite batch gradient at iteration {k}")
        G = op.adjoint_mean(g)
        try:
            T = retract(T, project_tangent(T, G), eta)
        except (NonFiniteError, np.linalg.LinAlgError) as exc:
            raise DivergenceError(k, f"retraction failed at iteration {k}: {exc}") from exc
        if callback is not None:
            callback(k, T)
    return T

