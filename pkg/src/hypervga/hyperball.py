"""Level-synchronous HyperBall over a delta-compressed graph.

Every node starts with an HLL counter holding only itself. Step ``t`` sets
``next[v] = cur[v] | cur[w] for w in N(v)`` (register-wise max), so after
``t`` steps counter ``v`` sketches the ball of radius ``t`` around ``v``. The
growth of the estimated ball size between steps approximates the number of
nodes first reached at distance ``t``; weighting it by ``t`` (and ``t**2``)
accumulates the sum (and squared sum) of distances.

Counters are keyed by *original* node ids, so a renumbered graph (Hilbert
order) yields exactly the same registers per node.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .cgraph import CompressedCsr
from .hll import HllParams, HllRegisterPlane, _estimate_all, _insert_own, nibble_max

CONVERGENCE_THRESHOLD = 0.5


@njit(cache=True, parallel=True)
def _union_step(cur, nxt, wpr, offsets, degrees, stream):
    """Fused neighbour decode and register union for every node."""
    n = degrees.size
    for v in prange(n):
        base = v * wpr
        for k in range(wpr):
            nxt[base + k] = cur[base + k]
        pos = np.int64(offsets[v])
        w = np.int64(-1)
        for _ in range(degrees[v]):
            val = np.int64(0)
            shift = 0
            while True:
                b = np.int64(stream[pos])
                pos += 1
                val |= (b & 0x7F) << shift
                if b < 128:
                    break
                shift += 7
            w = val if w < 0 else w + val
            src = w * wpr
            for k in range(wpr):
                nxt[base + k] = nibble_max(nxt[base + k], cur[src + k])


@dataclass
class HyperBallState:
    cur: HllRegisterPlane
    next: HllRegisterPlane
    c_prev: np.ndarray
    c_curr: np.ndarray
    sum_d: np.ndarray
    sum_d2: np.ndarray
    steps: int = 0  # propagation steps executed
    iteration: int = 0  # steps that grew some counter by more than the threshold
    converged: bool = False
    max_increases: list[float] = field(default_factory=list)
    elapsed: float = 0.0


def init_state(graph: CompressedCsr, params: HllParams) -> HyperBallState:
    n = graph.n_nodes
    if n == 0:
        raise ValueError("HyperBall needs a non-empty graph")
    cur = HllRegisterPlane(n, params)
    _insert_own(cur.packed, graph.original_ids(), params.precision)
    c0 = cur.estimate_all()
    return HyperBallState(cur=cur, next=HllRegisterPlane(n, params), c_prev=c0.copy(),
                          c_curr=c0, sum_d=np.zeros(n), sum_d2=np.zeros(n))


def iterate_once(state: HyperBallState, graph: CompressedCsr,
                 params: HllParams | None = None) -> float:
    """One propagation step; returns the largest per-node estimate increase."""
    params = params or state.cur.params
    t = state.steps + 1
    _union_step(state.cur.words, state.next.words, params.m // 16, graph.offsets,
                graph.degrees, graph.stream)
    est = np.empty(graph.n_nodes)
    _estimate_all(state.next.words, graph.n_nodes, params.m, params.alpha, est)
    # the raw and linear-counting branches can disagree near their switch point
    np.maximum(est, state.c_curr, out=est)
    delta = est - state.c_curr
    state.sum_d += t * delta
    state.sum_d2 += (t * t) * delta
    state.c_prev, state.c_curr = state.c_curr, est
    state.cur, state.next = state.next, state.cur
    state.steps = t
    max_inc = float(delta.max())
    state.max_increases.append(max_inc)
    return max_inc


def check_convergence(max_increase: float) -> bool:
    return max_increase <= CONVERGENCE_THRESHOLD


def run(graph: CompressedCsr, params: HllParams = HllParams(),
        depth_limit: int | None = None) -> HyperBallState:
    """Propagate until no estimate grows by more than 0.5, or ``depth_limit`` steps."""
    if depth_limit is not None and depth_limit < 1:
        raise ValueError("depth limit must be >= 1 (or None for unlimited)")
    t0 = time.perf_counter()
    state = init_state(graph, params)
    limit = math.inf if depth_limit is None else depth_limit
    while state.steps < limit:
        if check_convergence(iterate_once(state, graph, params)):
            state.converged = True
            break
        state.iteration = state.steps
    state.elapsed = time.perf_counter() - t0
    return state
