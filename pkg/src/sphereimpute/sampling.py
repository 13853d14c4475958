"""Row/column subsampling schedule for the stochastic descent.

Columns are fixed at ``m_0 = min(2p, m)`` for the whole run; rows start at
``n_0`` and double whenever the sampled objective fails to beat its best
value for ``patience`` consecutive steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PATIENCE = 5


@dataclass(frozen=True)
class SamplePlan:
    row_ids: np.ndarray
    col_ids: np.ndarray
    m_t: int
    n_t: int
    q_next: int
    doubled: bool = False


def initial_sizes(n, m, p, k, alpha):
    """Starting column and row sample sizes ``(m_0, n_0)``.

    ``n_0 = floor(k sqrt(nm) ln(sqrt(nm)) / (8 m_0 alpha))`` clamped to ``[1, n]``.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    m0 = min(2 * p, m)
    root = math.sqrt(n * m)
    n0 = math.floor(k * root * math.log(root) / (8 * m0 * alpha))
    return m0, min(max(n0, 1), n)


def adapt(m_prev, n_prev, eta_t, eta_best, q_t, n_cap, m_cap, rng, patience=PATIENCE):
    """One scheduling step. Returns ``(plan, eta_best)``.

    The doubling test uses the freshly updated counter, so it fires on exactly
    the ``patience``-th consecutive non-improving step.
    """
    if eta_t >= eta_best:
        q_next = q_t + 1
    else:
        eta_best = eta_t
        q_next = 0
    n_t, doubled = n_prev, False
    if q_next >= patience:
        q_next = 0
        n_t = min(2 * n_prev, n_cap)
        doubled = True
    cols = np.sort(rng.choice(m_cap, size=m_prev, replace=False))
    rows = np.sort(rng.choice(n_cap, size=n_t, replace=False))
    return SamplePlan(rows, cols, m_prev, n_t, q_next, doubled), eta_best


class AdaptiveSampler:
    """Stateful wrapper around :func:`adapt` for one descent run.

    ``n0``/``m0`` override the formula sizes (useful to force plateaus).
    The first plan uses the leading ``m_0`` columns and ``n_0`` rows, as a
    fixed deterministic start; every later plan is a fresh uniform sample.
    """

    def __init__(self, n, m, p, k, alpha, seed=None, patience=PATIENCE, n0=None, m0=None):
        fm0, fn0 = initial_sizes(n, m, p, k, alpha)
        self.n, self.m = n, m
        self.m0 = fm0 if m0 is None else min(int(m0), m)
        self.n0 = fn0 if n0 is None else min(max(int(n0), 1), n)
        self.patience = patience
        self.rng = np.random.default_rng(seed)
        self.eta_best = math.inf
        self.q = 0
        self.m_t, self.n_t = self.m0, self.n0

    def initial_plan(self) -> SamplePlan:
        return SamplePlan(np.arange(self.n0), np.arange(self.m0), self.m0, self.n0, 0)

    def next_plan(self, eta_t) -> SamplePlan:
        plan, self.eta_best = adapt(self.m_t, self.n_t, eta_t, self.eta_best, self.q,
                                    self.n, self.m, self.rng, self.patience)
        self.q, self.m_t, self.n_t = plan.q_next, plan.m_t, plan.n_t
        return plan
