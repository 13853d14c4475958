"""Separable objective c(S) and its exact gradient.

For each selected row i, with V = S B restricted to the selected columns and
W the row's observed columns inside that set, the row term is

    a_W^T (I - V_W^T (I_k/gamma + V_W V_W^T)^{-1} V_W) a_W

and its gradient is -2 gamma V_W r r^T B_W^T with r the bracketed residual.
Writing z = (I_k/gamma + V_W V_W^T)^{-1} V_W a_W (the ridge coefficients of
the row) gives V_W r = z / gamma exactly, so the gradient of a row is
-2 z (sum_j r_j b_j)^T. Everything reduces to one k x k Cholesky solve per
non-empty row; no m x m system is ever formed.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import FeatureMatrix, ObservedMatrix
from .errors import NumericalError, ParameterError

# Entries per chunk of rows; bounds the k-wide gathers to a few hundred MB.
CHUNK_ENTRIES = 1 << 20


@dataclass
class ObjectiveValue:
    cost: float
    gradient: np.ndarray
    factorizations: int = 0


@dataclass
class EngineOptions:
    """Parallel row reduction settings.

    In deterministic mode chunk results are reduced in row order whatever the
    thread count; fast mode reduces in completion order.
    """

    threads: int = 1
    deterministic: bool = True

    @classmethod
    def auto(cls, deterministic=True):
        return cls(threads=os.cpu_count() or 1, deterministic=deterministic)


def _cholesky(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    k = M.shape[-1]
    try:
        return np.linalg.cholesky(M + 1e-12 * np.eye(k))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("row system is not positive definite after regularization") from exc


def _cho_solve(L, rhs):
    y = np.linalg.solve(L, rhs[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), y)[..., 0]


def _gram_table(V):
    """``(c, k*k)`` table of per-column outer products v_j v_j^T."""
    k, c = V.shape
    return (V[:, None, :] * V[None, :, :]).reshape(k * k, c).T


def _solve_block(X, V, VV, gamma):
    """Ridge coefficients z_i for every row of the CSR block ``X`` (rows x c).

    Returns ``(Z, nonempty_mask, short)`` where ``short`` is ``None`` or the
    ``(entry_mask, residuals)`` of rows with at most k entries. Those rows
    are solved in their own small system (see :func:`_short_rows`) and get
    ``z = gamma V_W r`` from it. Empty rows get z = 0.
    """
    k = V.shape[0]
    counts = np.diff(X.indptr)
    nonempty = counts > 0
    Z = np.zeros((X.shape[0], k))
    if not nonempty.any():
        return Z, nonempty, None
    pattern = sparse.csr_matrix((np.ones_like(X.data), X.indices, X.indptr), shape=X.shape)
    M = np.asarray(pattern @ VV).reshape(-1, k, k)[nonempty]
    M += np.eye(k) / gamma
    rhs = np.asarray(X @ V.T)[nonempty]
    Z[nonempty] = _cho_solve(_cholesky(M), rhs)
    short = nonempty & (counts <= k)
    if not short.any():
        return Z, nonempty, None
    rows = np.repeat(np.arange(X.shape[0]), counts)
    on, r = _short_rows(X, V, gamma, short, rows)
    Rs = sparse.csr_matrix((r, (rows[on], X.indices[on])), shape=X.shape)
    Z[short] = gamma * np.asarray(Rs @ V.T)[short]
    return Z, nonempty, (on, r)


def _row_chunks(indptr, budget=None):
    budget = CHUNK_ENTRIES if budget is None else budget
    n = len(indptr) - 1
    start = 0
    while start < n:
        stop = int(np.searchsorted(indptr, indptr[start] + budget, side="right")) - 1
        stop = min(max(stop, start + 1), n)
        yield start, stop
        start = stop


def _check(S, obs, B, gamma):
    if gamma <= 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")
    if B.n_cols != obs.n_cols:
        raise ParameterError(
            f"feature matrix has {B.n_cols} columns, observed matrix has {obs.n_cols}")
    if S.ndim != 2 or S.shape[1] != B.p:
        raise ParameterError(f"S must be k x {B.p}, got shape {S.shape}")


def _select(obs, row_set, col_set):
    X = obs.csr
    if row_set is not None:
        row_set = np.asarray(row_set, dtype=np.int64)
        if len(row_set) == 0:
            raise ParameterError("row_set must not be empty")
        X = X[row_set]
    if col_set is not None:
        col_set = np.asarray(col_set, dtype=np.int64)
        X = X[:, col_set]
    n_sel = X.shape[0]
    if n_sel == 0:
        raise ParameterError("row_set must not be empty")
    return X.tocsr(), n_sel, col_set


def _short_rows(X, V, gamma, short, rows):
    """Residuals of rows with at most k entries from ``(I + gamma V_W^T V_W) r = a``.

    Such rows are fitted almost exactly, so ``a - V_W^T z`` would cancel to
    O(1/gamma) and the k x k ridge system is nearly singular along the
    directions ``V_W`` misses; the direct system is at most k x k here and
    has neither problem. Returns a boolean entry mask and the residuals on it.
    """
    k = V.shape[0]
    slot = np.cumsum(short) - 1
    on = short[rows]
    s_e = slot[rows[on]]
    pos = (np.arange(len(rows)) - X.indptr[rows])[on]
    Q = np.zeros((int(short.sum()), k, k))
    Q[s_e, :, pos] = V[:, X.indices[on]].T
    a = np.zeros((Q.shape[0], k))
    a[s_e, pos] = X.data[on]
    M = np.eye(k) + gamma * np.einsum("sli,slj->sij", Q, Q)
    r = _cho_solve(_cholesky(M), a)
    return on, r[s_e, pos]


def _chunk_terms(X, V, VV, gamma):
    Z, nonempty, short = _solve_block(X, V, VV, gamma)
    rows = np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))
    resid = X.data - np.einsum("ek,ke->e", Z[rows], V[:, X.indices])
    if short is not None:
        resid[short[0]] = short[1]
    # a^T r equals the ridge optimum ||r||^2 + ||z||^2/gamma; the latter has
    # no cancellation when the fit is nearly exact.
    cost = float(resid @ resid + np.einsum("ik,ik->", Z, Z) / gamma)
    R = sparse.csr_matrix((resid, X.indices, X.indptr), shape=X.shape)
    ZR = np.asarray((R.T @ Z).T)
    return cost, ZR, Z.T @ Z, int(nonempty.sum())


def evaluate(S, obs: ObservedMatrix, B: FeatureMatrix, gamma, row_set=None, col_set=None,
             options: EngineOptions | None = None) -> ObjectiveValue:
    """Cost and gradient over ``row_set`` x ``col_set`` (``None`` means all).

    The mean is taken over the number of selected rows, empty ones included.
    ``S`` is normally on the unit sphere but the formulas do not require it.
    """
    S = np.asarray(S, dtype=np.float64)
    _check(S, obs, B, gamma)
    options = options or EngineOptions()
    X, n_sel, cols = _select(obs, row_set, col_set)
    V = B.project(S, cols)
    VV = _gram_table(V)

    chunks = list(_row_chunks(X.indptr))
    work = lambda se: _chunk_terms(X[se[0]:se[1]], V, VV, gamma)  # noqa: E731
    if options.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(options.threads) as pool:
            if options.deterministic:
                parts = list(pool.map(work, chunks))
            else:
                parts = [f.result() for f in as_completed([pool.submit(work, c) for c in chunks])]
    else:
        parts = [work(c) for c in chunks]

    total = 0.0
    ZR = np.zeros(V.shape)
    ZZ = np.zeros((S.shape[0], S.shape[0]))
    factorizations = 0
    for c, zr, zz, nf in parts:
        total += c
        ZR += zr
        ZZ += zz
        factorizations += nf
    grad = _gradient(S, B.backproject(ZR, cols), ZZ, gamma)
    if B.is_identity:
        # Columns no selected row observes are exact zeros of the gradient.
        touched = np.unique(X.indices)
        unseen = np.ones(B.p, dtype=bool)
        unseen[touched if cols is None else cols[touched]] = False
        grad[:, unseen] = 0.0
    return ObjectiveValue(total / n_sel, -2.0 * grad / n_sel, factorizations)


def _gradient(S, C, ZZ, gamma):
    """``sum_i z_i h_i^T`` with ``h_i = B_W r_i``, given ``C`` computed that way.

    Since ``S h_i = z_i / gamma`` exactly, the part of each ``h_i`` inside the
    row space of ``S`` is ``S^T (S S^T)^{-1} z_i / gamma``. Computed from the
    residual sum it cancels down to O(1/gamma) on well-fitted rows, so that
    part is replaced by the exact form and ``C`` supplies only the rest.
    """
    G = S @ S.T
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return C
    if np.linalg.cond(L) > 1e6:
        return C
    Y = _cho_solve(L, S.T).T  # (S S^T)^{-1} S
    return C - (C @ S.T) @ Y + (ZZ / gamma) @ Y


def cost(S, obs, B, gamma, row_set=None, col_set=None, options=None) -> float:
    return evaluate(S, obs, B, gamma, row_set, col_set, options).cost


def gradient(S, obs, B, gamma, row_set=None, col_set=None, options=None) -> np.ndarray:
    return evaluate(S, obs, B, gamma, row_set, col_set, options).gradient


def row_coefficients(S, obs: ObservedMatrix, B: FeatureMatrix, gamma) -> np.ndarray:
    """Per-row ridge coefficients ``z_i`` (``n x k``) over all observed entries.

    These are the rows of U implied by S; empty rows get zeros.
    """
    S = np.asarray(S, dtype=np.float64)
    _check(S, obs, B, gamma)
    V = B.project(S)
    VV = _gram_table(V)
    X = obs.csr
    Z = np.zeros((obs.n_rows, S.shape[0]))
    for start, stop in _row_chunks(X.indptr):
        Z[start:stop] = _solve_block(X[start:stop], V, VV, gamma)[0]
    return Z
