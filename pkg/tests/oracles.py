"""Slow, transparent reference implementations used only by the tests.

Nothing here imports the package's matricization or projection code, so
agreement with the package is a real cross-check.
"""

import itertools

import numpy as np


def unfold(T, j):
    # any column order has the same left singular vectors
    return np.moveaxis(T, j, 0).reshape(T.shape[j], -1)


def top_left(M, r):
    U = np.linalg.svd(M, full_matrices=True)[0]
    return U[:, :r]


def contract_all(T, mats):
    """``T x_0 mats[0] x_1 mats[1] ...`` by einsum."""
    out = T
    for j, W in enumerate(mats):
        out = np.moveaxis(np.tensordot(W, out, axes=(1, j)), 0, j)
    return out


def brute_hosvd(T, ranks):
    """Dense truncated HOSVD from full SVDs of every unfolding, materialized."""
    Us = [top_left(unfold(T, j), r) for j, r in enumerate(ranks)]
    P = [U @ U.T for U in Us]
    return contract_all(T, P)


def hooi(T, ranks, iters=200):
    """Higher-order orthogonal iteration started from the HOSVD; materialized."""
    Us = [top_left(unfold(T, j), r) for j, r in enumerate(ranks)]
    for _ in range(iters):
        for j, r in enumerate(ranks):
            mats = [U.T if k != j else np.eye(T.shape[j]) for k, U in enumerate(Us)]
            Us[j] = top_left(unfold(contract_all(T, mats), j), r)
    return contract_all(T, [U @ U.T for U in Us])


def triple_loop_tucker(core, factors):
    dims = [U.shape[0] for U in factors]
    out = np.zeros(dims)
    for idx in itertools.product(*[range(d) for d in dims]):
        total = 0.0
        for jdx in itertools.product(*[range(r) for r in core.shape]):
            w = core[jdx]
            for U, i, k in zip(factors, idx, jdx):
                w *= U[i, k]
            total += w
        out[idx] = total
    return out


def tangent_basis(core, factors):
    """Orthonormal basis (columns) of the tangent space, assembled column by column.

    Core directions ``E_k x_j U_j`` plus, for every mode ``i``, arm directions
    ``C x_{j != i} U_j x_i (v e_k^T)`` with ``v`` ranging over a basis of the
    orthogonal complement of ``U_i``.
    """
    cols = []
    for k in itertools.product(*[range(r) for r in core.shape]):
        E = np.zeros(core.shape)
        E[k] = 1.0
        cols.append(contract_all(E, factors).ravel())
    for i, U in enumerate(factors):
        d, r = U.shape
        full = np.linalg.svd(U, full_matrices=True)[0]
        perp = full[:, r:]
        for a in range(perp.shape[1]):
            for k in range(r):
                W = np.outer(perp[:, a], np.eye(r)[k])
                mats = [W if j == i else Uj for j, Uj in enumerate(factors)]
                cols.append(contract_all(core, mats).ravel())
    A = np.array(cols).T
    Q, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return Q[:, :rank]


def basis_projection(core, factors, X):
    Q = tangent_basis(core, factors)
    return (Q @ (Q.T @ X.ravel())).reshape(X.shape)


def dense_step(core, factors, X, y, eta, dloss):
    """oRGrad step with a dense covariate, basis projection and brute-force HOSVD."""
    T = contract_all(core, factors)
    theta = float(np.sum(X * T))
    G = dloss(theta, y) * X
    return brute_hosvd(T - eta * basis_projection(core, factors, G), core.shape)
