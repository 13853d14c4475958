"""Projected descent on the unit Frobenius sphere.

Each step accumulates a Nesterov-style gradient, removes its radial
component at the current iterate, and rotates the iterate by a fixed angle
along the great circle in the resulting descent direction.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import svds

from .data import FeatureMatrix, ObservedMatrix
from .errors import ParameterError
from .objective import EngineOptions, evaluate

ZERO_DIRECTION = 1e-14
ITERATE_CHOICES = ("auto", "best", "final")


@dataclass
class DescentConfig:
    theta: float = math.pi / 64
    t_max: int = 50
    gamma: float = 1e6
    patience: int = 5
    warmstart_threshold: float = 0.5
    # Which iterate the pipelines fill from: "final" (the last rotation),
    # "best" (lowest sampled objective seen) or "auto" (whichever of those
    # two has the lower objective over all observed entries).
    iterate: str = "auto"

    def __post_init__(self):
        if not 0 < self.theta < math.pi / 2:
            raise ParameterError(f"theta must lie in (0, pi/2), got {self.theta}")
        if self.t_max < 1:
            raise ParameterError(f"t_max must be >= 1, got {self.t_max}")
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.iterate not in ITERATE_CHOICES:
            raise ParameterError(f"iterate must be one of {ITERATE_CHOICES}, got {self.iterate!r}")


@dataclass
class StepRecord:
    t: int
    eta: float
    m_t: int
    n_t: int
    wall_ms: float
    norm_error: float = 0.0
    tangency: float = 0.0


@dataclass
class DescentResult:
    S: np.ndarray
    trace: list[StepRecord] = field(default_factory=list)
    best_S: np.ndarray | None = None
    best_eta: float = math.inf
    converged: bool = False
    warm: bool = False


def _unit(S):
    return S / np.linalg.norm(S)


def random_start(k, p, seed):
    """Uniform [0, 1] entries scaled onto the unit sphere."""
    rng = np.random.default_rng(seed)
    return _unit(rng.uniform(0.0, 1.0, size=(k, p)))


def top_right_singular_vectors(obs: ObservedMatrix, k, seed=None):
    """Leading ``k`` right singular vectors (``k x m``) of the zero-filled matrix."""
    n, m = obs.shape
    if k < min(n, m) - 1:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(min(n, m))
        _, s, vt = svds(obs.csr, k=k, v0=v0)
        order = np.argsort(s)[::-1]
        return s[order], vt[order]
    # ARPACK needs k < min(n, m). Here one side is at most k + 1 wide, so the
    # small Gram matrix on that side gives the decomposition cheaply.
    A = obs.csr
    if m <= n:
        w, vecs = np.linalg.eigh((A.T @ A).toarray())
        order = np.argsort(w)[::-1][:k]
        return np.sqrt(np.clip(w[order], 0, None)), vecs[:, order].T
    w, vecs = np.linalg.eigh((A @ A.T).toarray())
    order = np.argsort(w)[::-1][:k]
    s = np.sqrt(np.clip(w[order], 0, None))
    vt = np.asarray((A.T @ vecs[:, order]).T)
    safe = np.where(s > 0, s, 1.0)
    return s, vt / safe[:, None]


def warmstart(obs: ObservedMatrix, B: FeatureMatrix, k, threshold=0.5, seed=None):
    """Initial point on the sphere.

    Uses the top-k right singular vectors when more than ``threshold`` of the
    entries are observed (fitted onto the row space of ``B`` by least squares
    when ``B`` is not the identity); otherwise a seeded random direction.
    Returns ``(S, used_svd)``.
    """
    if k > min(B.p, obs.n_rows, obs.n_cols):
        raise ParameterError(f"k={k} exceeds min(p, n, m)={min(B.p, *obs.shape)}")
    # All-zero data has no singular directions to start from.
    if obs.alpha > threshold and np.any(obs.csr.data):
        s, vt = top_right_singular_vectors(obs, k, seed)
        if s.size and s[0] > 0 and np.all(np.isfinite(vt)):
            if B.is_identity:
                S = vt
            else:
                S = np.linalg.lstsq(B.to_dense().T, vt.T, rcond=None)[0].T
            norm = np.linalg.norm(S)
            if norm > 0 and np.isfinite(norm):
                return S / norm, True
    return random_start(k, B.p, seed), False


def nesterov_accumulate(G, accel_prev, t):
    return G + ((t - 1) / (t + 2)) * accel_prev


def project_to_tangent(accel, S):
    """Negated tangent component of ``accel`` at ``S`` (a descent direction)."""
    return -accel + np.vdot(accel, S) * S


def rotate_update(S, d, theta):
    """Great-circle step of angle ``theta`` from ``S`` towards ``d``.

    Returns ``(S_next, moved)``; a vanishing ``d`` leaves ``S`` unchanged with
    ``moved = False``.
    """
    norm = np.linalg.norm(d)
    if norm < ZERO_DIRECTION:
        return S, False
    return S * math.cos(theta) + (d / norm) * math.sin(theta), True


def descend(obs: ObservedMatrix, B: FeatureMatrix, k, config: DescentConfig | None = None,
            sampler=None, seed=None, initial=None, options: EngineOptions | None = None,
            log=None) -> DescentResult:
    """Run ``t_max - 1`` sphere steps and return the final iterate with its trace.

    Without a ``sampler`` every step uses all rows and columns. With one, the
    objective at each step is evaluated on the sampler's current row/column
    sets, and ``trace`` holds those sampled values.
    """
    config = config or DescentConfig()
    if initial is None:
        S, warm = warmstart(obs, B, k, config.warmstart_threshold, seed)
    else:
        S, warm = _unit(np.asarray(initial, dtype=np.float64)), False

    rows = cols = None
    m_t, n_t = obs.n_cols, obs.n_rows
    if sampler is not None:
        plan = sampler.initial_plan()
        rows, cols, m_t, n_t = plan.row_ids, plan.col_ids, plan.m_t, plan.n_t

    clock = time.perf_counter()
    value = evaluate(S, obs, B, config.gamma, rows, cols, options)
    eta, G = value.cost, value.gradient
    result = DescentResult(S, warm=warm)
    result.trace.append(StepRecord(1, eta, m_t, n_t, (time.perf_counter() - clock) * 1e3,
                                   abs(np.linalg.norm(S) - 1.0)))
    result.best_S, result.best_eta = S, eta
    accel = np.zeros_like(S)

    t = 1
    while t < config.t_max:
        clock = time.perf_counter()
        if sampler is not None:
            plan = sampler.next_plan(eta)
            rows, cols, m_t, n_t = plan.row_ids, plan.col_ids, plan.m_t, plan.n_t
        accel = nesterov_accumulate(G, accel, t)
        d = project_to_tangent(accel, S)
        S_next, moved = rotate_update(S, d, config.theta)
        if not moved:
            result.converged = True
            break
        tangency = abs(np.vdot(d, S)) / np.linalg.norm(d)
        # The rotation preserves the norm exactly in real arithmetic; this
        # keeps rounding drift from accumulating over long runs.
        S = _unit(S_next)
        value = evaluate(S, obs, B, config.gamma, rows, cols, options)
        eta, G = value.cost, value.gradient
        t += 1
        result.trace.append(StepRecord(t, eta, m_t, n_t, (time.perf_counter() - clock) * 1e3,
                                       abs(np.linalg.norm(S_next) - 1.0), tangency))
        if eta < result.best_eta:
            result.best_S, result.best_eta = S, eta
        if log is not None:
            log(result.trace[-1])
    result.S = S
    return result
