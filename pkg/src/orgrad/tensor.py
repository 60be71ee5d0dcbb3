"""Dense and Tucker-format tensor algebra.

Dense tensors are plain ``numpy.ndarray`` objects whose shape is the tuple of
dimensions. Modes are numbered from 0. The canonical linearization is
mode-0-fastest (Fortran order), so the mode-0 matricization is a reshape.

For mode ``j`` the columns of the matricization run over the remaining modes
cyclically, ``j+1, ..., m-1, 0, ..., j-1``, the first of them varying fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataFormatError, DimensionError, NonFiniteError

ORTHONORMAL_TOL = 1e-10


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a finite float64 array of order >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise DimensionError("tensors must have at least one mode")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor entries must be finite")
    return arr


def _check_mode(m: int, mode: int) -> None:
    if not 0 <= mode < m:
        raise DimensionError(f"mode {mode} out of range for an order-{m} tensor")


def _cyclic_order(m: int, mode: int) -> list[int]:
    return [mode] + list(range(mode + 1, m)) + list(range(mode))


def _unfold(T: np.ndarray, mode: int) -> np.ndarray:
    order = _cyclic_order(T.ndim, mode)
    return np.transpose(T, order).reshape(T.shape[mode], -1, order="F")


def _fold(M: np.ndarray, dims: Sequence[int], mode: int) -> np.ndarray:
    order = _cyclic_order(len(dims), mode)
    permuted = M.reshape([dims[k] for k in order], order="F")
    return np.transpose(permuted, np.argsort(order))


def matricize(T, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding, shape ``(d_mode, d*/d_mode)``.

    Examples
    --------
    >>> T = np.arange(1, 9, dtype=float).reshape(2, 2, 2, order="F")
    >>> matricize(T, 0)
    array([[1., 3., 5., 7.],
           [2., 4., 6., 8.]])
    """
    T = as_tensor(T)
    _check_mode(T.ndim, mode)
    return _unfold(T, mode)


def dematricize(M, dims: Sequence[int], mode: int) -> np.ndarray:
    """Inverse of :func:`matricize`."""
    M = np.asarray(M, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    _check_mode(len(dims), mode)
    if M.ndim != 2 or M.shape[0] != dims[mode] or M.size != int(np.prod(dims)):
        raise DimensionError(
            f"matrix of shape {M.shape} does not unfold dims {dims} along mode {mode}"
        )
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("matrix entries must be finite")
    return _fold(M, dims, mode)


def _mode_product(T: np.ndarray, W: np.ndarray, mode: int) -> np.ndarray:
    # (a, d, b) view of T with the acted-on mode in the middle; matmul broadcasts over a
    s = T.shape
    a, b = math.prod(s[:mode]), math.prod(s[mode + 1:])
    out = np.matmul(W, T.reshape(a, s[mode], b))
    return out.reshape(s[:mode] + (W.shape[0],) + s[mode + 1:])


def mode_product(T, W, mode: int) -> np.ndarray:
    """Mode-``mode`` product ``T x_mode W`` with ``W`` of shape ``(p, d_mode)``."""
    T = as_tensor(T)
    W = np.asarray(W, dtype=np.float64)
    _check_mode(T.ndim, mode)
    if W.ndim != 2 or W.shape[1] != T.shape[mode]:
        raise DimensionError(
            f"matrix of shape {W.shape} cannot act on mode {mode} of size {T.shape[mode]}"
        )
    return _mode_product(T, W, mode)


def multi_mode_product(T, mats, skip=None, transpose=False) -> np.ndarray:
    """Apply ``mats[j]`` (or its transpose) along every mode ``j`` except ``skip``."""
    out = T
    for j, W in enumerate(mats):
        if j == skip or W is None:
            continue
        out = _mode_product(out, W.T if transpose else W, j)
    return out


def _check_same_dims(T: np.ndarray, S: np.ndarray) -> None:
    if T.shape != S.shape:
        raise DimensionError(f"dimension mismatch {T.shape} vs {S.shape}")


def inner(T, S) -> float:
    T, S = as_tensor(T), as_tensor(S)
    _check_same_dims(T, S)
    return float(np.vdot(T, S))


def fro_norm(T) -> float:
    return float(np.linalg.norm(as_tensor(T).ravel()))


def sup_norm(T) -> float:
    return float(np.max(np.abs(as_tensor(T))))


def axpy(alpha: float, T, S) -> np.ndarray:
    """Return ``alpha * T + S``."""
    T, S = as_tensor(T), as_tensor(S)
    _check_same_dims(T, S)
    return alpha * T + S


def _sign_flips(U: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made non-negative; argmax keeps the lowest index on ties
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def thin_svd(M, r: int):
    """Rank-``r`` truncated SVD with a deterministic sign convention.

    Returns
    -------
    U : (d, r) orthonormal
    s : (r,) singular values, descending
    V : (n, r) orthonormal
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError("thin_svd expects a matrix")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("matrix entries must be finite")
    if not 1 <= r <= min(M.shape):
        raise DimensionError(f"rank {r} out of range for a {M.shape[0]}x{M.shape[1]} matrix")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U, s, V = U[:, :r], s[:r], Vt[:r].T
    signs = _sign_flips(U)
    return U * signs, s, V * signs


def _top_left_singular(M: np.ndarray, r: int) -> np.ndarray:
    U = np.linalg.svd(M, full_matrices=False)[0][:, :r]
    return U * _sign_flips(U)


@dataclass(frozen=True, eq=False)
class TuckerTensor:
    """Tucker tensor ``core x_0 U_0 x_1 ... x_{m-1} U_{m-1}`` with orthonormal factors."""

    core: np.ndarray
    factors: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        core = as_tensor(self.core)
        factors = tuple(np.asarray(U, dtype=np.float64) for U in self.factors)
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)
        if len(factors) != core.ndim:
            raise DimensionError(f"{len(factors)} factors for an order-{core.ndim} core")
        for j, U in enumerate(factors):
            if U.ndim != 2 or U.shape[1] != core.shape[j]:
                raise DimensionError(f"factor {j} has shape {U.shape}, core rank {core.shape[j]}")
            if U.shape[1] > U.shape[0]:
                raise DimensionError(f"rank {U.shape[1]} exceeds dimension {U.shape[0]} in mode {j}")
            if not np.all(np.isfinite(U)):
                raise NonFiniteError(f"factor {j} has non-finite entries")
            gram = U.T @ U
            np.fill_diagonal(gram, np.diag(gram) - 1.0)
            if np.max(np.abs(gram), initial=0.0) > ORTHONORMAL_TOL:
                raise DimensionError(f"factor {j} is not orthonormal")

    @property
    def dims(self) -> tuple:
        return tuple(U.shape[0] for U in self.factors)

    @property
    def ranks(self) -> tuple:
        return self.core.shape

    @property
    def order(self) -> int:
        return self.core.ndim

    def entry(self, index) -> float:
        """Value at one multi-index, without densifying."""
        out = self.core
        for U, i in zip(self.factors, index):
            out = np.tensordot(U[i], out, axes=(0, 0))
        return float(out)

    def fro_norm(self) -> float:
        return float(np.linalg.norm(self.core.ravel()))


def materialize(X: TuckerTensor) -> np.ndarray:
    """Dense form of a Tucker tensor by successive mode products."""
    return multi_mode_product(X.core, X.factors)


def _check_ranks(dims: Sequence[int], ranks: Sequence[int]) -> tuple:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims):
        raise DimensionError(f"{len(ranks)} ranks given for an order-{len(dims)} tensor")
    total = int(np.prod(dims))
    for j, (d, r) in enumerate(zip(dims, ranks)):
        if not 1 <= r <= min(d, total // d):
            raise DimensionError(f"rank {r} invalid for mode {j} of size {d}")
    return ranks


def hosvd(T, ranks: Sequence[int]) -> TuckerTensor:
    """Truncated HOSVD of a dense tensor (dense reference path)."""
    T = as_tensor(T)
    ranks = _check_ranks(T.shape, ranks)
    factors = [_top_left_singular(_unfold(T, j), r) for j, r in enumerate(ranks)]
    core = multi_mode_product(T, factors, transpose=True)
    return TuckerTensor(core, tuple(factors))


def hosvd_factored(core, factors, ranks: Sequence[int]) -> TuckerTensor:
    """Truncated HOSVD of ``core x_j A_j`` without forming the dense tensor.

    The factors ``A_j`` (shape ``d_j x s_j``) need not be orthonormal. Each is
    reduced by a QR decomposition, so the work is ``O(sum_j d_j s_j^2)`` plus
    SVDs of the small core; with ``s_j = 2 r_j`` this is the retraction cost
    used by the online learner.
    """
    core = np.asarray(core, dtype=np.float64)
    dims = tuple(A.shape[0] for A in factors)
    ranks = _check_ranks(dims, ranks)
    Qs, small = [], core
    for j, A in enumerate(factors):
        A = np.asarray(A, dtype=np.float64)
        if A.shape[1] < ranks[j]:
            # Householder QR still returns orthonormal columns for the zero padding
            pad = ranks[j] - A.shape[1]
            A = np.hstack([A, np.zeros((A.shape[0], pad))])
            small = np.concatenate([small, np.zeros(small.shape[:j] + (pad,) + small.shape[j + 1:])], axis=j)
        Q, R = np.linalg.qr(A)
        Qs.append(Q)
        small = _mode_product(small, R, j)
    return truncate_small(small, Qs, ranks)


def truncate_small(small: np.ndarray, bases, ranks) -> TuckerTensor:
    """HOSVD of ``small x_j Q_j`` for orthonormal bases ``Q_j``, working on ``small`` only."""
    if not np.all(np.isfinite(small)):
        raise NonFiniteError("factored input has non-finite entries")
    Qs = bases
    new_factors, proj = [], []
    for j, (Q, r) in enumerate(zip(Qs, ranks)):
        V = np.linalg.svd(_unfold(small, j), full_matrices=False)[0][:, :r]
        U = Q @ V
        signs = _sign_flips(U)
        new_factors.append(U * signs)
        proj.append(V * signs)
    new_core = multi_mode_product(small, proj, transpose=True)
    return TuckerTensor(new_core, tuple(new_factors))


def fro_distance(A: TuckerTensor, B: TuckerTensor) -> float:
    """``||A - B||_F`` without densifying.

    The Gram identity ``|A|^2 + |B|^2 - 2<A, B>`` is used when it is safely
    away from cancellation; otherwise the difference is formed in a joint
    orthonormal basis of ``[U_A, U_B]`` per mode.
    """
    if A.dims != B.dims:
        raise DimensionError(f"dimension mismatch {A.dims} vs {B.dims}")
    na2, nb2 = float(np.sum(A.core**2)), float(np.sum(B.core**2))
    cross = multi_mode_product(B.core, [Ua.T @ Ub for Ua, Ub in zip(A.factors, B.factors)])
    sq = na2 + nb2 - 2.0 * float(np.vdot(A.core, cross))
    if sq > 1e-6 * (na2 + nb2):
        return math.sqrt(sq)
    ra, rb = A.ranks, B.ranks
    block = np.zeros([a + b for a, b in zip(ra, rb)])
    block[tuple(slice(0, a) for a in ra)] = A.core
    block[tuple(slice(a, a + b) for a, b in zip(ra, rb))] = -B.core
    for j, (Ua, Ub) in enumerate(zip(A.factors, B.factors)):
        R = np.linalg.qr(np.hstack([Ua, Ub]), mode="r")
        block = _mode_product(block, R, j)
    return float(np.linalg.norm(block.ravel()))


def dof(dims: Sequence[int], ranks: Sequence[int]) -> int:
    """Parameter count ``r* + sum_j d_j r_j`` of the Tucker model (no capping)."""
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(dims) or min(ranks, default=0) < 1:
        raise DimensionError(f"ranks {ranks} invalid for dims {tuple(dims)}")
    return int(np.prod(ranks)) + int(sum(d * r for d, r in zip(dims, ranks)))


def write_tensor(path, T) -> None:
    """Write ``dims: d1 ... dm`` then the entries in canonical order, one per line.

    Tucker tensors are densified first.
    """
    T = materialize(T) if isinstance(T, TuckerTensor) else as_tensor(T)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("dims: " + " ".join(str(d) for d in T.shape) + "\n")
        for v in T.ravel(order="F"):
            fh.write(repr(float(v)) + "\n")


def read_tensor(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        body = fh.read()
    if not header.startswith("dims:"):
        raise DataFormatError("missing 'dims:' header", line=1)
    try:
        dims = tuple(int(tok) for tok in header[len("dims:"):].split())
        values = np.array([float(tok) for tok in body.split()])
    except ValueError as exc:
        raise DataFormatError(f"unparsable token ({exc})") from None
    if not dims or any(d < 1 for d in dims):
        raise DataFormatError(f"invalid dims {dims}", line=1)
    if values.size != int(np.prod(dims)):
        raise DataFormatError(f"expected {int(np.prod(dims))} entries, found {values.size}")
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{path}: non-finite entry")
    return as_tensor(values.reshape(dims, order="F"))
