"""Dense reference implementations used only by the tests.

These follow the textbook m x m forms literally (zero-padded rows, diagonal
masks, explicit inverses) and share no code with the package.
"""
import numpy as np


def dense_inputs(obs, B_dense):
    A = obs.zero_filled()
    mask = np.zeros(obs.shape, dtype=bool)
    e = obs.entries()
    mask[e.rows, e.cols] = True
    return A, mask, B_dense


def cost_dense(S, A, mask, B, gamma, rows=None, cols=None):
    """Mean of abar_i^T (I_m + gamma W_i B^T S^T S B W_i)^{-1} abar_i."""
    rows = np.arange(A.shape[0]) if rows is None else np.asarray(rows)
    cols = np.arange(A.shape[1]) if cols is None else np.asarray(cols)
    Bc = B[:, cols]
    total = 0.0
    for i in rows:
        W = np.diag(mask[i, cols].astype(float))
        abar = A[i, cols] * mask[i, cols]
        M = np.eye(len(cols)) + gamma * W @ Bc.T @ S.T @ S @ Bc @ W
        total += abar @ np.linalg.inv(M) @ abar
    return total / len(rows)


def cost_woodbury_dense(S, A, mask, B, gamma):
    """Mean of abar_i^T (I - V (I_k/gamma + V W_i V^T)^{-1} V^T) abar_i, V = S B.

    The column/row orientation of V here follows S B (k x m), so the inner
    product is V W_i V^T.
    """
    V = S @ B
    k, m = V.shape
    total = 0.0
    for i in range(A.shape[0]):
        W = np.diag(mask[i].astype(float))
        abar = A[i] * mask[i]
        inner = np.linalg.inv(np.eye(k) / gamma + V @ W @ V.T)
        total += abar @ (np.eye(m) - W @ V.T @ inner @ V @ W) @ abar
    return total / A.shape[0]


def gamma_vector_dense(S, A, mask, B, gamma, i):
    m = A.shape[1]
    W = np.diag(mask[i].astype(float))
    abar = A[i] * mask[i]
    return np.linalg.solve(np.eye(m) + gamma * W @ B.T @ S.T @ S @ B @ W, abar)


def gradient_dense(S, A, mask, B, gamma):
    """Mean over rows of -2 gamma V g_i g_i^T B^T with g_i from the m x m solve."""
    V = S @ B
    total = np.zeros_like(S)
    for i in range(A.shape[0]):
        g = gamma_vector_dense(S, A, mask, B, gamma, i)
        total += -2.0 * gamma * np.outer(V @ g, g) @ B.T
    return total / A.shape[0]


def finite_difference_gradient(f, S, h=1e-6):
    G = np.zeros_like(S)
    for idx in np.ndindex(S.shape):
        Sp = S.copy()
        Sm = S.copy()
        Sp[idx] += h
        Sm[idx] -= h
        G[idx] = (f(Sp) - f(Sm)) / (2 * h)
    return G


def fill_dense(S, A, mask, B, gamma):
    """Row-wise B^T S^T (S B W_i B^T S^T + I/gamma)^{-1} S B abar_i."""
    V = S @ B
    k = V.shape[0]
    out = np.zeros(A.shape)
    for i in range(A.shape[0]):
        W = np.diag(mask[i].astype(float))
        abar = A[i] * mask[i]
        out[i] = V.T @ np.linalg.solve(V @ W @ V.T + np.eye(k) / gamma, V @ abar)
    return out


def mape_reference(filled, truth):
    return float(np.mean(np.abs(filled - truth) / np.abs(truth)))


def random_instance(rng, n, m, p, k, fill=0.6):
    A = rng.normal(size=(n, m))
    mask = rng.random((n, m)) < fill
    B = rng.normal(size=(p, m))
    S = rng.normal(size=(k, p))
    S /= np.linalg.norm(S)
    return A, mask, B, S


# High-precision references. At gamma = 1e6 the m x m systems have condition
# number near gamma, so float64 dense oracles carry ~1e-10 error of their own;
# these evaluate the same literal forms in 40-digit arithmetic.

def _mp():
    import mpmath
    mpmath.mp.dps = 40
    return mpmath


def to_mp(X):
    mp = _mp()
    return mp.matrix([[mp.mpf(float(v)) for v in row] for row in np.atleast_2d(X)])


def _row_terms_mp(S, A, mask, B, gamma, rows, cols):
    """Yield ``(abar, M)`` with ``M = I + gamma W Bc^T S^T S Bc W`` in mp arithmetic."""
    mp = _mp()
    g = mp.mpf(float(gamma))
    Bc = to_mp(B[:, cols])
    V = S * Bc
    VtV = V.T * V
    c = len(cols)
    for i in rows:
        w = [bool(mask[i, j]) for j in cols]
        abar = mp.matrix([mp.mpf(float(A[i, j])) if w[a] else mp.mpf(0)
                          for a, j in enumerate(cols)])
        M = mp.eye(c)
        for a in range(c):
            for b in range(c):
                if w[a] and w[b]:
                    M[a, b] += g * VtV[a, b]
        yield abar, M, V


def cost_mp(S, A, mask, B, gamma, rows=None, cols=None):
    """Mean of abar_i^T (I_m + gamma W_i B^T S^T S B W_i)^{-1} abar_i; ``S`` is an mp matrix."""
    mp = _mp()
    rows = list(range(A.shape[0])) if rows is None else list(rows)
    cols = list(range(A.shape[1])) if cols is None else list(cols)
    total = mp.mpf(0)
    for abar, M, _ in _row_terms_mp(S, A, mask, B, gamma, rows, cols):
        total += (abar.T * mp.lu_solve(M, abar))[0]
    return total / len(rows)


def gradient_mp(S, A, mask, B, gamma, rows=None, cols=None):
    """Mean over rows of -2 gamma V g g^T Bc^T, ``g = M^{-1} abar``."""
    mp = _mp()
    rows = list(range(A.shape[0])) if rows is None else list(rows)
    cols = list(range(A.shape[1])) if cols is None else list(cols)
    g_ = mp.mpf(float(gamma))
    Bc = to_mp(B[:, cols])
    total = mp.zeros(S.rows, S.cols)
    for abar, M, V in _row_terms_mp(S, A, mask, B, gamma, rows, cols):
        g = mp.lu_solve(M, abar)
        total += -2 * g_ * (V * g) * (g.T * Bc.T)
    return total / len(rows)


def gamma_vector_mp(S, A, mask, B, gamma, i):
    mp = _mp()
    cols = list(range(A.shape[1]))
    abar, M, _ = next(_row_terms_mp(S, A, mask, B, gamma, [i], cols))
    return mp.lu_solve(M, abar)


def fd_gradient_mp(S, A, mask, B, gamma, h=1e-6):
    """Central differences of :func:`cost_mp` with step ``h``, in mp arithmetic."""
    mp = _mp()
    Smp = to_mp(S)
    hh = mp.mpf(h)
    G = np.zeros(S.shape)
    for a, b in np.ndindex(S.shape):
        Sp, Sm = Smp.copy(), Smp.copy()
        Sp[a, b] += hh
        Sm[a, b] -= hh
        G[a, b] = float((cost_mp(Sp, A, mask, B, gamma) - cost_mp(Sm, A, mask, B, gamma)) / (2 * hh))
    return G


def fill_mp(S, A, mask, B, gamma):
    """Row-wise V^T (V W_i V^T + I/gamma)^{-1} V abar_i in mp arithmetic."""
    mp = _mp()
    V = to_mp(S) * to_mp(B)
    k, m = V.rows, V.cols
    g = mp.mpf(float(gamma))
    out = np.zeros(A.shape)
    for i in range(A.shape[0]):
        abar = mp.matrix([mp.mpf(float(A[i, j])) if mask[i, j] else mp.mpf(0) for j in range(m)])
        VW = V.copy()
        for j in range(m):
            if not mask[i, j]:
                for a in range(k):
                    VW[a, j] = 0
        M = VW * VW.T + mp.eye(k) / g
        row = V.T * mp.lu_solve(M, V * abar)
        out[i] = [float(row[j]) for j in range(m)]
    return out


def mp_to_array(X):
    return np.array([[float(X[a, b]) for b in range(X.cols)] for a in range(X.rows)])


def coefficients_mp(S, A, mask, B, gamma, i):
    """``z_i = gamma V gamma_i`` (the ridge coefficients of row i) in mp arithmetic."""
    mp = _mp()
    g = gamma_vector_mp(to_mp(S), A, mask, B, gamma, i)
    z = to_mp(S) * to_mp(B) * g * mp.mpf(float(gamma))
    return np.array([float(z[a]) for a in range(z.rows)])
