"""Final fill, error metrics, the side-information pipeline and rank selection."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Entries, FeatureMatrix, ObservedMatrix, mask_validation_split
from .descent import DescentConfig, descend
from .errors import ParameterError
from .objective import EngineOptions, cost, row_coefficients
from .sampling import AdaptiveSampler

MAPE_ZERO_THRESHOLD = 1e-9


@dataclass
class Segment:
    """Factors for the columns ``[start, stop)``: prediction is ``Z[i] @ V[:, j - start]``."""

    start: int
    stop: int
    Z: np.ndarray
    V: np.ndarray


@dataclass
class CompletionReport:
    shape: tuple[int, int]
    k_used: int
    segments: list[Segment]
    filled: np.ndarray | None = None
    transposed: bool = False
    mape_train: float | None = None
    mape_holdout: float | None = None
    timing: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)
    traces: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    S: np.ndarray | None = None

    def predict(self, rows, cols) -> np.ndarray:
        """Completed values at the given (row, col) pairs of the original matrix."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if self.filled is not None:
            return self.filled[rows, cols]
        if self.transposed:
            rows, cols = cols, rows
        out = np.zeros(len(rows))
        for seg in self.segments:
            sel = (cols >= seg.start) & (cols < seg.stop)
            if sel.any():
                out[sel] = np.einsum("ek,ke->e", seg.Z[rows[sel]], seg.V[:, cols[sel] - seg.start])
        return out

    def to_dict(self) -> dict:
        return dict(
            shape=list(self.shape), k_used=self.k_used, transposed=self.transposed,
            n_blocks=len(self.segments), mape_train=self.mape_train,
            mape_holdout=self.mape_holdout, timing=self.timing, flags=self.flags,
            meta=self.meta,
            trace_summary=[dict(block=b, steps=len(t), eta_first=t[0].eta, eta_last=t[-1].eta,
                                n_t_last=t[-1].n_t, m_t=t[-1].m_t)
                           for b, t in enumerate(self.traces) if t],
        )


def fill_rows(S_star, obs: ObservedMatrix, B: FeatureMatrix, gamma):
    """Dense completion ``Z V`` with ``Z`` the ridge coefficients of each row.

    Returns ``(filled, empty_rows)``; rows with no observations are zero.
    """
    Z = row_coefficients(S_star, obs, B, gamma)
    V = B.project(np.asarray(S_star, dtype=np.float64))
    empty = np.flatnonzero(obs.row_counts() == 0)
    return Z @ V, empty


def mape_details(filled, truth, threshold=MAPE_ZERO_THRESHOLD):
    """``(mape, n_excluded)`` where entries with ``|truth| < threshold`` are skipped.

    ``truth`` is a dense array matching ``filled`` or an :class:`Entries`
    list; with entries, ``filled`` may be dense, a 1-d array of predictions
    aligned with the entries, or a :class:`CompletionReport`.
    """
    if isinstance(truth, Entries):
        if isinstance(filled, CompletionReport):
            pred = filled.predict(truth.rows, truth.cols)
        else:
            filled = np.asarray(filled)
            pred = filled if filled.ndim == 1 else filled[truth.rows, truth.cols]
        actual = truth.values
    else:
        pred = np.asarray(filled, dtype=np.float64).ravel()
        actual = np.asarray(truth, dtype=np.float64).ravel()
        if pred.shape != actual.shape:
            raise ParameterError("filled and truth must have the same shape")
    keep = np.abs(actual) >= threshold
    if not keep.any():
        raise ParameterError("every truth entry is below the MAPE exclusion threshold")
    err = np.abs(pred[keep] - actual[keep]) / np.abs(actual[keep])
    return float(err.mean()), int((~keep).sum())


def mape(filled, truth, threshold=MAPE_ZERO_THRESHOLD) -> float:
    return mape_details(filled, truth, threshold)[0]


def check_rank(k, obs, p):
    if k < 1:
        raise ParameterError("rank must be ≥ 1")
    if k > min(p, obs.n_rows, obs.n_cols):
        raise ParameterError(f"rank {k} exceeds min(p, n, m) = {min(p, *obs.shape)}")


def complete_with_features(obs: ObservedMatrix, B: FeatureMatrix, k, config=None, seed=0,
                           stochastic=True, options: EngineOptions | None = None,
                           dense_output=True, n0=None, log=None) -> CompletionReport:
    """Sphere descent on ``S`` followed by the row-wise fill.

    ``stochastic=False`` runs full-gradient steps on every row and column.
    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`; the start
    point and the sampler draw from independent child streams.
    """
    config = config or DescentConfig()
    check_rank(k, obs, B.p)
    if B.n_cols != obs.n_cols:
        raise ParameterError(f"features have {B.n_cols} columns, matrix has {obs.n_cols}")
    if obs.omega_size == 0:
        raise ParameterError("matrix has no observed entries")
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seq, sample_seq = seq.spawn(2)

    t0 = time.perf_counter()
    sampler = None
    if stochastic:
        sampler = AdaptiveSampler(obs.n_rows, obs.n_cols, B.p, k, obs.alpha, seed=sample_seq,
                                  patience=config.patience, n0=n0)
    result = descend(obs, B, k, config, sampler=sampler, seed=init_seq, options=options, log=log)
    S_fill, full_costs = choose_iterate(result, obs, B, config, stochastic, options)
    t1 = time.perf_counter()
    Z = row_coefficients(S_fill, obs, B, config.gamma)
    V = B.project(S_fill)
    filled = Z @ V if dense_output else None
    t2 = time.perf_counter()

    flags = []
    n_empty = int((obs.row_counts() == 0).sum())
    if n_empty:
        flags.append(f"empty_rows:{n_empty}")
    if result.converged:
        flags.append("zero_tangent_gradient")
    report = CompletionReport(
        shape=obs.shape, k_used=k, segments=[Segment(0, obs.n_cols, Z, V)], filled=filled,
        timing=dict(descent_ms=(t1 - t0) * 1e3, fill_ms=(t2 - t1) * 1e3, total_ms=(t2 - t0) * 1e3),
        flags=flags, traces=[result.trace], S=S_fill,
        meta=dict(warmstart="svd" if result.warm else "random", stochastic=stochastic,
                  iterate=config.iterate, best_eta=result.best_eta,
                  steps=len(result.trace), full_objective=full_costs),
    )

    report.mape_train = _observed_mape(report, obs)
    return report


def choose_iterate(result, obs, B, config, stochastic=True, options=None):
    """The iterate to fill from, plus any full objective values computed to pick it.

    Under subsampling the per-step objectives are measured on different
    random subsets, so the lowest one is a noisy pick; "auto" settles it by
    evaluating the final and the best-sampled iterates on all observed
    entries. Without subsampling the best iterate is already exact.
    """
    if config.iterate == "final":
        return result.S, {}
    if config.iterate == "best" or not stochastic or result.best_S is result.S:
        return result.best_S, {}
    final = cost(result.S, obs, B, config.gamma, options=options)
    best = cost(result.best_S, obs, B, config.gamma, options=options)
    chosen = result.best_S if best < final else result.S
    return chosen, dict(final=final, best=best)


def _observed_mape(report, obs):
    try:
        return mape(report, obs.entries())
    except ParameterError:
        return None


def run_pipeline(obs, k, features=None, config=None, seed=0, block_size=1000, transpose=None,
                 options=None, dense_output=True, stochastic=True):
    """Dispatch to the side-information pipeline or the column-blocked one."""
    if features is None or features.is_identity:
        from .blocks import complete_blocked
        return complete_blocked(obs, k, config, block_size, seed=seed, transpose=transpose,
                                options=options, dense_output=dense_output, stochastic=stochastic)
    return complete_with_features(obs, features, k, config, seed=seed, options=options,
                                  dense_output=dense_output, stochastic=stochastic)


@dataclass
class RankSelection:
    k_best: int
    table: dict
    failures: dict


def select_rank(obs: ObservedMatrix, features, candidate_ks, config=None, seed=0,
                holdout_fraction=0.2, block_size=1000, options=None) -> RankSelection:
    """Pick the rank with the lowest holdout MAPE on an 80/20 split.

    Ties within 1e-12 go to the smaller rank. A failing candidate is recorded
    in ``failures`` and does not stop the sweep.
    """
    ks = sorted(set(int(k) for k in candidate_ks))
    if not ks:
        raise ParameterError("candidate ranks must not be empty")
    train, holdout = mask_validation_split(obs, holdout_fraction, seed)
    table, failures = {}, {}
    for k in ks:
        try:
            report = run_pipeline(train, k, features, config, seed=seed, block_size=block_size,
                                  options=options, dense_output=False)
            table[k] = mape(report, holdout)
        except (ParameterError, ArithmeticError) as exc:
            failures[k] = str(exc)
    if not table:
        raise ParameterError(f"every candidate rank failed: {failures}")
    best, best_err = None, math.inf
    for k in ks:
        if k in table and table[k] < best_err - 1e-12:
            best, best_err = k, table[k]
    return RankSelection(best, table, failures)
