"""Observed matrices, feature matrices and the synthetic-data generator.

All randomness goes through ``numpy.random.default_rng(seed)`` (PCG64), so a
given seed reproduces the same instance bit-for-bit on any platform numpy
supports.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ParameterError


@dataclass(frozen=True)
class Entries:
    """A flat list of (row, col, value) triplets, 0-based."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)


class ObservedMatrix:
    """Partially observed ``n x m`` matrix stored row-wise.

    Internally a CSR matrix with sorted, duplicate-free column indices per
    row. Explicitly observed zeros are kept as stored entries. Instances are
    treated as immutable.
    """

    def __init__(self, csr: sparse.csr_matrix):
        self._csr = csr

    @classmethod
    def from_triplets(cls, rows, cols, values, shape) -> "ObservedMatrix":
        n, m = (int(shape[0]), int(shape[1]))
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
            raise ParameterError("rows, cols and values must be 1-d arrays of equal length")
        if n < 1 or m < 1:
            raise ParameterError(f"shape must be positive, got {shape}")
        if len(rows):
            if rows.min() < 0 or rows.max() >= n:
                raise ParameterError("row index out of bounds")
            if cols.min() < 0 or cols.max() >= m:
                raise ParameterError("column index out of bounds")
        if not np.all(np.isfinite(values)):
            raise ParameterError("observed values must be finite")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
        if np.any(dup):
            i = int(np.flatnonzero(dup)[0])
            raise ParameterError(f"duplicate entry at ({rows[i]}, {cols[i]})")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        csr = sparse.csr_matrix((values, cols, indptr), shape=(n, m))
        csr.has_sorted_indices = True
        return cls(csr)

    @classmethod
    def from_dense(cls, array, mask=None) -> "ObservedMatrix":
        array = np.asarray(array, dtype=np.float64)
        if mask is None:
            mask = np.ones(array.shape, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls.from_triplets(rows, cols, array[rows, cols], array.shape)

    @property
    def csr(self) -> sparse.csr_matrix:
        return self._csr

    @property
    def shape(self) -> tuple[int, int]:
        return self._csr.shape

    @property
    def n_rows(self) -> int:
        return self._csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self._csr.shape[1]

    @property
    def omega_size(self) -> int:
        return int(self._csr.indptr[-1])

    @property
    def alpha(self) -> float:
        return self.omega_size / (self.n_rows * self.n_cols)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self._csr.indptr[i], self._csr.indptr[i + 1]
        return self._csr.indices[lo:hi], self._csr.data[lo:hi]

    def row_counts(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def entries(self) -> Entries:
        rows = np.repeat(np.arange(self.n_rows), self.row_counts())
        return Entries(rows, self._csr.indices.astype(np.int64), self._csr.data.copy())

    def zero_filled(self) -> np.ndarray:
        return self._csr.toarray()

    def column_block(self, start: int, stop: int) -> "ObservedMatrix":
        """Columns ``[start, stop)`` as a new matrix of width ``stop - start``."""
        return ObservedMatrix(self._csr[:, start:stop].tocsr())

    def transpose(self) -> "ObservedMatrix":
        return transpose(self)

    def __eq__(self, other):
        if not isinstance(other, ObservedMatrix) or self.shape != other.shape:
            return NotImplemented if not isinstance(other, ObservedMatrix) else False
        a, b = self._csr, other._csr
        return (np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data))

    __hash__ = None

    def __repr__(self):
        return f"ObservedMatrix(shape={self.shape}, omega_size={self.omega_size})"


def transpose(obs: ObservedMatrix) -> ObservedMatrix:
    e = obs.entries()
    return ObservedMatrix.from_triplets(e.cols, e.rows, e.values, (obs.n_cols, obs.n_rows))


@dataclass(frozen=True)
class FeatureMatrix:
    """Column side information ``B`` (``p x m``).

    The identity case never materializes ``B``; :meth:`project` and
    :meth:`backproject` pass indices through instead.
    """

    p: int
    n_cols: int
    data: np.ndarray | None = None

    @classmethod
    def dense(cls, data) -> "FeatureMatrix":
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ParameterError("feature matrix must be 2-d")
        if not np.all(np.isfinite(data)):
            raise ParameterError("feature matrix must be finite")
        return cls(data.shape[0], data.shape[1], data)

    @classmethod
    def identity(cls, m: int) -> "FeatureMatrix":
        return cls(m, m, None)

    @property
    def is_identity(self) -> bool:
        return self.data is None

    def columns(self, cols=None) -> np.ndarray:
        """Dense ``B[:, cols]``; only meant for small column sets."""
        if self.is_identity:
            eye = np.eye(self.p)
            return eye if cols is None else eye[:, cols]
        return self.data if cols is None else self.data[:, cols]

    def project(self, S: np.ndarray, cols=None) -> np.ndarray:
        """``V = S B`` restricted to ``cols``."""
        if self.is_identity:
            return S if cols is None else S[:, cols]
        return S @ self.columns(cols)

    def backproject(self, C: np.ndarray, cols=None) -> np.ndarray:
        """Map a ``k x |cols|`` column-space matrix to ``k x p`` via ``C B[:, cols]^T``."""
        if self.is_identity:
            if cols is None:
                return C
            out = np.zeros((C.shape[0], self.p))
            out[:, cols] = C
            return out
        return C @ self.columns(cols).T

    def to_dense(self) -> np.ndarray:
        return self.columns()


@dataclass
class SyntheticInstance:
    truth: np.ndarray
    observed: ObservedMatrix
    features: FeatureMatrix
    params: dict = field(default_factory=dict)


def generate_synthetic(n, m, p, k, mu, seed, side_info=True) -> SyntheticInstance:
    """Draw ``A = U S B`` with i.i.d. uniform [0, 1] factors and mask a fraction ``mu``.

    With ``side_info=False`` the features are the identity and the truth is
    ``U V`` with ``V`` of shape ``k x m`` (``p`` is forced to ``m``).

    Exactly ``round((1 - mu) * n * m)`` entries are kept, sampled without
    replacement. Draw order is fixed: U, S (or V), B, mask.
    """
    n, m, k = int(n), int(m), int(k)
    if not side_info:
        p = m
    p = int(p)
    if min(n, m, p, k) < 1:
        raise ParameterError("n, m, p and k must all be >= 1")
    if k > min(p, n, m):
        raise ParameterError(f"k={k} exceeds min(p, n, m)={min(p, n, m)}")
    if not 0 <= mu < 1:
        raise ParameterError(f"mu must lie in [0, 1), got {mu}")
    rng = np.random.default_rng(seed)
    U = rng.uniform(0.0, 1.0, size=(n, k))
    S = rng.uniform(0.0, 1.0, size=(k, p))
    if side_info:
        B = rng.uniform(0.0, 1.0, size=(p, m))
        truth = U @ S @ B
        features = FeatureMatrix.dense(B)
    else:
        truth = U @ S
        features = FeatureMatrix.identity(m)
    n_keep = int(round((1.0 - mu) * n * m))
    flat = np.sort(rng.choice(n * m, size=n_keep, replace=False))
    rows, cols = np.divmod(flat, m)
    observed = ObservedMatrix.from_triplets(rows, cols, truth[rows, cols], (n, m))
    params = dict(n=n, m=m, p=p, k=k, mu=float(mu), seed=seed, side_info=bool(side_info))
    return SyntheticInstance(truth, observed, features, params)


def mask_validation_split(obs: ObservedMatrix, holdout_fraction: float, seed):
    """Move a uniform ``holdout_fraction`` of the observed entries into a holdout list."""
    if not 0 < holdout_fraction < 1:
        raise ParameterError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    size = obs.omega_size
    n_hold = int(round(holdout_fraction * size))
    if size <= 1 or n_hold == 0 or n_hold >= size:
        raise ParameterError(
            f"cannot hold out {holdout_fraction} of {size} observed entries without "
            "emptying the training or holdout set")
    rng = np.random.default_rng(seed)
    chosen = np.zeros(size, dtype=bool)
    chosen[rng.choice(size, size=n_hold, replace=False)] = True
    e = obs.entries()
    train = ObservedMatrix.from_triplets(e.rows[~chosen], e.cols[~chosen], e.values[~chosen], obs.shape)
    holdout = Entries(e.rows[chosen], e.cols[chosen], e.values[chosen])
    return train, holdout
