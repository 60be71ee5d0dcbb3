"""Tangent spaces, projection and HOSVD retraction on the fixed-Tucker-rank manifold.

A tangent vector at ``T = C x_j U_j`` is stored as a core part ``D`` plus one
arm ``W_i`` per mode with ``U_i^T W_i = 0``; it materializes to

    D x_j U_j  +  sum_i  C x_{j != i} U_j x_i W_i .
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionError, RankDeficientCoreError, ZeroTensorError
from .covariates import DenseCovariate, EntryCovariate
from .tensor import (
    TuckerTensor,
    _mode_product,
    _top_left_singular,
    _unfold,
    as_tensor,
    hosvd_factored,
    materialize,
    multi_mode_product,
    truncate_small,
)

PINV_RTOL = 1e-12


def core_pinvs(point: TuckerTensor, strict: bool = True) -> tuple:
    """Pseudo-inverses of every core matricization, cached on the point.

    Singular values below ``PINV_RTOL * sigma_1`` are treated as zero. With
    ``strict`` a truncated singular value raises instead.
    """
    key = ("pinv", strict)
    cached = point._cache.get(key)
    if cached is not None:
        return cached
    out = []
    for j in range(point.order):
        Cj = _unfold(point.core, j)
        U, s, Vt = np.linalg.svd(Cj, full_matrices=False)
        cutoff = PINV_RTOL * (s[0] if s.size else 0.0)
        keep = s > cutoff
        if s.size == 0 or s[0] == 0.0 or (strict and not keep.all()):
            raise RankDeficientCoreError(
                f"core matricization {j} is rank deficient (singular values {s})"
            )
        out.append((Vt[keep].T / s[keep]) @ U[:, keep].T)
    out = tuple(out)
    point._cache[key] = out
    return out


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: TuckerTensor
    core_part: np.ndarray
    arms: tuple
    # optional rank-one arms W_i = col_i coeff_i^T (entry covariates)
    rank_one: tuple = None

    def scaled(self, alpha: float) -> "TangentVector":
        r1 = None if self.rank_one is None else tuple((c, alpha * v) for c, v in self.rank_one)
        return TangentVector(self.base, alpha * self.core_part, tuple(alpha * W for W in self.arms), r1)

    def components(self) -> list:
        """The m+1 mutually orthogonal dense components (core term first)."""
        U, C = self.base.factors, self.base.core
        parts = [multi_mode_product(self.core_part, U)]
        for i, W in enumerate(self.arms):
            parts.append(_mode_product(multi_mode_product(C, U, skip=i), W, i))
        return parts

    def materialize(self) -> np.ndarray:
        return sum(self.components())

    def fro_norm(self) -> float:
        # components are orthogonal and U_j orthonormal, so arm norms reduce to small products
        total = float(np.sum(self.core_part**2))
        C = self.base.core
        for i, W in enumerate(self.arms):
            Ci = _unfold(C, i)
            total += float(np.sum((W @ Ci) ** 2))
        return float(np.sqrt(total))


Covariate = Union[np.ndarray, DenseCovariate, EntryCovariate]


def _project_dense(point: TuckerTensor, X: np.ndarray, pinvs) -> TangentVector:
    U = point.factors
    m = point.order
    if X.shape != point.dims:
        raise DimensionError(f"covariate dims {X.shape} do not match point dims {point.dims}")
    # prefix[i] = X x_{j < i} U_j^T; arm i then contracts the modes after i
    prefix = [X]
    for j in range(m - 1):
        prefix.append(_mode_product(prefix[-1], U[j].T, j))
    core_part = _mode_product(prefix[-1], U[m - 1].T, m - 1)
    arms = []
    for i in range(m):
        Y = prefix[i]
        for j in range(i + 1, m):
            Y = _mode_product(Y, U[j].T, j)
        Z = _unfold(Y, i) @ pinvs[i]
        arms.append(Z - U[i] @ (U[i].T @ Z))
    return TangentVector(point, core_part, tuple(arms))


def _project_entry(point: TuckerTensor, X: EntryCovariate, pinvs) -> TangentVector:
    U = point.factors
    m = point.order
    if len(X.index) != m:
        raise DimensionError(f"index {X.index} has wrong arity for an order-{m} point")
    rows = [Uj[i] for Uj, i in zip(U, X.index)]
    core_part = X.scale * _outer(rows)
    arms, pairs = [], []
    for i in range(m):
        others = [row if j != i else np.ones(1) for j, row in enumerate(rows)]
        v = _unfold(_outer(others), i)[0]
        coeff = X.scale * (v @ pinvs[i])
        col = -U[i] @ rows[i]
        col[X.index[i]] += 1.0
        arms.append(np.outer(col, coeff))
        pairs.append((col, coeff))
    return TangentVector(point, core_part, tuple(arms), tuple(pairs))


def _outer(vectors) -> np.ndarray:
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def project_tangent(point: TuckerTensor, X: Covariate, strict: bool = True) -> TangentVector:
    """Orthogonal projection of ``X`` onto the tangent space at ``point``.

    ``X`` may be a dense array or a covariate; entry covariates take a fast
    path whose cost is ``O(sum_j d_j r_j + r* r_max)`` and never densify.

    Raises
    ------
    RankDeficientCoreError
        If a core matricization of ``point`` is rank deficient.
    """
    pinvs = core_pinvs(point, strict=strict)
    if isinstance(X, EntryCovariate):
        return _project_entry(point, X, pinvs)
    if isinstance(X, DenseCovariate):
        X = X.tensor
    return _project_dense(point, as_tensor(X), pinvs)


def project_tangent_complement(point: TuckerTensor, X, strict: bool = True) -> np.ndarray:
    Xd = X.dense(point.dims) if isinstance(X, (DenseCovariate, EntryCovariate)) else as_tensor(X)
    return Xd - project_tangent(point, X, strict=strict).materialize()


def factored_step(point: TuckerTensor, grad: TangentVector, eta: float):
    """``T - eta * grad`` as a block core of size ``2r`` with factors ``[U_j, W_j]``."""
    factors = [np.hstack([Uj, Wj]) for Uj, Wj in zip(point.factors, grad.arms)]
    return _step_core(point, grad, eta), factors


def _step_core(point: TuckerTensor, grad: TangentVector, eta: float) -> np.ndarray:
    C = point.core
    r = C.shape
    block = np.zeros([2 * k for k in r])
    block[tuple(slice(0, k) for k in r)] = C - eta * grad.core_part
    for i in range(point.order):
        idx = tuple(slice(k, 2 * k) if j == i else slice(0, k) for j, k in enumerate(r))
        block[idx] = -eta * C
    return block


def retract(point: TuckerTensor, grad: TangentVector, eta: float) -> TuckerTensor:
    """HOSVD retraction of ``point - eta * grad`` via the factored rank-``2r`` path.

    Arms are orthogonal to the point's factors, so the joint basis of
    ``[U_j, W_j]`` is ``[U_j, Q_j]`` with ``W_j = Q_j R_j``; only the arms need
    a QR factorization.
    """
    if eta < 0:
        raise ValueError("step size must be non-negative")
    if grad.base is not point:
        raise DimensionError("tangent vector is based at a different point")
    if grad.rank_one is not None:
        out = _retract_rank_one(point, grad, eta)
        if out is not None:
            return out
    block = _step_core(point, grad, eta)
    qrs = [np.linalg.qr(W) for W in grad.arms]
    for Q, R in qrs:
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-12 * max(diag.max(), 1.0):
            # rank-deficient arm (always so for entry covariates): the spare QR
            # columns need not be orthogonal to U, so take the general path
            factors = [np.hstack([Uj, Wj]) for Uj, Wj in zip(point.factors, grad.arms)]
            return hosvd_factored(block, factors, point.ranks)
    bases = []
    for j, (U, (Q, R)) in enumerate(zip(point.factors, qrs)):
        r = U.shape[1]
        idx = [slice(None)] * point.order
        idx[j] = slice(r, 2 * r)
        block[tuple(idx)] = _mode_product(block[tuple(idx)], R, j)
        bases.append(np.hstack([U, Q]))
    return truncate_small(block, bases, point.ranks)


def _retract_rank_one(point: TuckerTensor, grad: TangentVector, eta: float):
    # with W_i = col_i coeff_i^T and col_i orthogonal to U_i, the joint basis is
    # [U_i, col_i / |col_i|] and the step lives on an (r+1)^m core
    C, m = point.core, point.order
    r = C.shape
    block = np.zeros([k + 1 for k in r])
    block[tuple(slice(0, k) for k in r)] = C - eta * grad.core_part
    bases = []
    for i, (U, (col, coeff)) in enumerate(zip(point.factors, grad.rank_one)):
        norm = float(np.linalg.norm(col))
        if norm <= 1e-12:
            return None
        idx = tuple(r[i] if j == i else slice(0, k) for j, k in enumerate(r))
        # slab = -eta * |col| * (C x_i coeff^T), with mode i collapsed
        block[idx] = -eta * norm * np.take(_mode_product(C, coeff[None, :], i), 0, axis=i)
        bases.append(np.hstack([U, (col / norm)[:, None]]))
    return truncate_small(block, bases, point.ranks)


@dataclass(frozen=True)
class SpectralReport:
    lambda_min: float
    lambda_max: float
    kappa0: float
    incoherence: float
    spikiness: float

    CSV_HEADER = "lambda_min,lambda_max,kappa0,incoherence,spikiness"

    def csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in
                        (self.lambda_min, self.lambda_max, self.kappa0, self.incoherence, self.spikiness))


def incoherence(U) -> float:
    """``(d/r) max_i ||U^T e_i||^2`` for an orthonormal ``d x r`` matrix."""
    U = np.asarray(U, dtype=np.float64)
    d, r = U.shape
    return float(d / r * np.max(np.sum(U**2, axis=1)))


def spikiness(X) -> float:
    X = materialize(X) if isinstance(X, TuckerTensor) else as_tensor(X)
    fro = np.linalg.norm(X.ravel())
    if fro == 0.0:
        raise ZeroTensorError("spikiness is undefined for the zero tensor")
    return float(np.sqrt(X.size) * np.max(np.abs(X)) / fro)


def _mode_singular_values(X, ranks):
    if isinstance(X, TuckerTensor):
        # orthonormal factors leave the singular values of each unfolding unchanged
        return [np.linalg.svd(_unfold(X.core, j), compute_uv=False) for j in range(X.order)], list(X.factors)
    X = as_tensor(X)
    svals, factors = [], []
    for j, r in enumerate(ranks):
        M = _unfold(X, j)
        svals.append(np.linalg.svd(M, compute_uv=False))
        factors.append(_top_left_singular(M, r))
    return svals, factors


def spectral_report(X, ranks=None) -> SpectralReport:
    """Signal strength, condition number, incoherence and spikiness of ``X``."""
    if isinstance(X, TuckerTensor):
        ranks = X.ranks if ranks is None else tuple(ranks)
        if tuple(ranks) != X.ranks:
            raise DimensionError(f"ranks {ranks} do not match the Tucker ranks {X.ranks}")
    else:
        X = as_tensor(X)
        if ranks is None or len(ranks) != X.ndim:
            raise DimensionError("ranks must give one value per mode")
        for j, r in enumerate(ranks):
            if not 1 <= r <= min(X.shape[j], X.size // X.shape[j]):
                raise DimensionError(f"rank {r} invalid for mode {j} of size {X.shape[j]}")
    svals, factors = _mode_singular_values(X, ranks)
    lam_max = max(float(s[0]) for s in svals)
    if lam_max == 0.0:
        raise ZeroTensorError("spectral report is undefined for the zero tensor")
    lam_min = min(float(s[r - 1]) if r <= s.size else 0.0 for s, r in zip(svals, ranks))
    kappa0 = lam_max / lam_min if lam_min > 0 else float("inf")
    return SpectralReport(
        lambda_min=lam_min,
        lambda_max=lam_max,
        kappa0=kappa0,
        incoherence=max(incoherence(U) for U in factors),
        spikiness=spikiness(X),
    )


def spikiness_bound(X: TuckerTensor) -> float:
    """Right-hand side ``sqrt(r*/r_max) kappa0 mu0^(m/2)`` with measured kappa0 and mu0."""
    rep = spectral_report(X)
    r = X.ranks
    return float(np.sqrt(np.prod(r) / max(r)) * rep.kappa0 * rep.incoherence ** (X.order / 2))


def incoherence_to_spikiness_check(X: TuckerTensor) -> bool:
    """Whether measured spikiness obeys the incoherence-implies-spikiness bound."""
    return spikiness(X) <= spikiness_bound(X) * (1 + 1e-12)
