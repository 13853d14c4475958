"""Column-blocked completion for the no-side-information case.

With identity features a column of the data only interacts with its own
column of ``S``, so disjoint column blocks are solved as independent
problems and stitched back together.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .completion import CompletionReport, Segment, _observed_mape, complete_with_features
from .data import FeatureMatrix, ObservedMatrix
from .descent import DescentConfig
from .errors import ParameterError

DEFAULT_BLOCK_SIZE = 1000


@dataclass(frozen=True)
class BlockPlan:
    block_size: int
    ranges: list[tuple[int, int]]


def plan_blocks(m, ell=DEFAULT_BLOCK_SIZE) -> BlockPlan:
    if ell < 1:
        raise ParameterError(f"block size must be >= 1, got {ell}")
    ranges = [(s, min(s + ell, m)) for s in range(0, m, ell)]
    return BlockPlan(ell, ranges)


def block_seed(seed, index) -> np.random.SeedSequence:
    """Seed for block ``index``; independent of how many blocks there are."""
    return np.random.SeedSequence(seed, spawn_key=(int(index),))


def complete_blocked(obs: ObservedMatrix, k, config=None, ell=DEFAULT_BLOCK_SIZE, seed=0,
                     transpose=None, options=None, dense_output=True, stochastic=True,
                     order=None) -> CompletionReport:
    """Complete ``obs`` block by block with identity features.

    ``transpose=None`` transposes when there are fewer rows than columns;
    ``True``/``False`` force the choice. ``order`` permutes the block solve
    order (the output does not depend on it).
    """
    config = config or DescentConfig()
    if k < 1:
        raise ParameterError("rank must be ≥ 1")
    if obs.omega_size == 0:
        raise ParameterError("matrix has no observed entries")
    flip = obs.n_rows < obs.n_cols if transpose is None else bool(transpose)
    work = obs.transpose() if flip else obs
    n, m = work.shape
    plan = plan_blocks(m, ell)
    narrow = min(stop - start for start, stop in plan.ranges)
    if k > n or k > narrow:
        raise ParameterError(
            f"rank {k} exceeds the row count ({n}) or the narrowest block width ({narrow})")

    t0 = time.perf_counter()
    segments = [None] * len(plan.ranges)
    traces = [None] * len(plan.ranges)
    flags = []
    indices = range(len(plan.ranges)) if order is None else order
    for b in indices:
        start, stop = plan.ranges[b]
        sub = work.column_block(start, stop)
        if sub.omega_size == 0:
            segments[b] = Segment(start, stop, np.zeros((n, k)), np.zeros((k, stop - start)))
            traces[b] = []
            flags.append(f"empty_block:{b}")
            continue
        part = complete_with_features(sub, FeatureMatrix.identity(stop - start), k, config,
                                      seed=block_seed(seed, b), stochastic=stochastic,
                                      options=options, dense_output=False)
        segments[b] = Segment(start, stop, part.segments[0].Z, part.segments[0].V)
        traces[b] = part.traces[0]
        flags.extend(f"block{b}:{f}" for f in part.flags)
    t1 = time.perf_counter()

    filled = None
    if dense_output:
        filled = np.empty((n, m))
        for seg in segments:
            filled[:, seg.start:seg.stop] = seg.Z @ seg.V
        if flip:
            filled = np.ascontiguousarray(filled.T)
    t2 = time.perf_counter()

    report = CompletionReport(
        shape=obs.shape, k_used=k, segments=segments, filled=filled, transposed=flip,
        timing=dict(descent_ms=(t1 - t0) * 1e3, fill_ms=(t2 - t1) * 1e3, total_ms=(t2 - t0) * 1e3),
        flags=flags, traces=traces,
        meta=dict(block_size=ell, n_blocks=len(segments), stochastic=stochastic),
    )
    report.mape_train = _observed_mape(report, obs)
    return report


def n_blocks(m, ell=DEFAULT_BLOCK_SIZE) -> int:
    return math.ceil(m / ell)
