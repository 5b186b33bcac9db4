"""Exact reference computations used to validate the approximate pipeline.

Nothing here shares code with the HyperBall path: distances come from plain
per-source BFS over the decoded adjacency, components from flood fill, local
structure from sparse-matrix products, and visibility from a pairwise
segment-crossing test.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numba import njit, prange
from scipy import stats

from .cgraph import CompressedCsr
from .errors import InputError
from .geometry import GridSpec, NodeSet


@njit(cache=True)
def _flood_fill(indptr, indices):
    n = indptr.size - 1
    label = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    count = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = count
        head, tail = 0, 1
        queue[0] = s
        while head < tail:
            v = queue[head]
            head += 1
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if label[w] < 0:
                    label[w] = count
                    queue[tail] = w
                    tail += 1
        count += 1
    return label, count


@njit(cache=True)
def _eccentricity(indptr, indices, s):
    n = indptr.size - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    dist[s] = 0
    queue[0] = s
    head, tail = 0, 1
    ecc = 0
    while head < tail:
        v = queue[head]
        head += 1
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                ecc = max(ecc, dist[w])
                queue[tail] = w
                tail += 1
    return ecc


@njit(cache=True, parallel=True)
def _bfs_all(indptr, indices, limit, width, n_chunks):
    n = indptr.size - 1
    hist = np.zeros((n, width), dtype=np.int64)
    chunk = (n + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        dist = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        for s in range(c * chunk, min(n, (c + 1) * chunk)):
            dist[s] = 0
            queue[0] = s
            head, tail = 0, 1
            while head < tail:
                v = queue[head]
                head += 1
                hist[s, dist[v]] += 1
                if dist[v] == limit:
                    continue
                for e in range(indptr[v], indptr[v + 1]):
                    w = indices[e]
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        queue[tail] = w
                        tail += 1
            for k in range(tail):
                dist[queue[k]] = -1
    return hist


@dataclass
class ExactResult:
    depth_hist: np.ndarray  # (N, W): nodes at exactly depth t from v, t = 0..W-1
    component_id: np.ndarray
    component_size: np.ndarray  # per node

    @property
    def sum_d(self) -> np.ndarray:
        t = np.arange(self.depth_hist.shape[1])
        return self.depth_hist @ t

    @property
    def sum_d2(self) -> np.ndarray:
        t = np.arange(self.depth_hist.shape[1])
        return self.depth_hist @ (t * t)

    @property
    def neighbourhood(self) -> np.ndarray:
        """|B(v, t)| for t = 0..W-1."""
        return np.cumsum(self.depth_hist, axis=1)

    @property
    def max_depth(self) -> int:
        nz = np.flatnonzero(self.depth_hist.any(axis=0))
        return int(nz[-1]) if nz.size else 0


def exact_bfs_all(graph: CompressedCsr, depth_limit: int | None = None,
                  n_chunks: int = 64) -> ExactResult:
    """Exact BFS from every node, truncated at ``depth_limit`` hops."""
    indptr, indices = graph.to_arrays()
    label, count = _flood_fill(indptr, indices)
    first = np.unique(label, return_index=True)[1]
    # a BFS tree from any node bounds the diameter by twice its eccentricity
    bound = max((2 * _eccentricity(indptr, indices, s) for s in first), default=0)
    sizes = np.bincount(label, minlength=count)
    bound = min(bound, int(sizes.max()) - 1) if count else 0
    limit = bound if depth_limit is None else min(depth_limit, bound)
    hist = _bfs_all(indptr, indices, limit, limit + 1, max(1, min(n_chunks, graph.n_nodes)))
    hist = hist[:, :max(1, int(np.flatnonzero(hist.any(axis=0))[-1]) + 1)]
    return ExactResult(hist, label, sizes[label])


def neighbourhood_identity_sum(neighbourhood: np.ndarray) -> np.ndarray:
    """sum_t t * (|B(v,t)| - |B(v,t-1)|) from a neighbourhood-function table."""
    growth = np.diff(neighbourhood, axis=1)
    t = np.arange(1, neighbourhood.shape[1])
    return growth @ t


def depth_entropy(depth_hist: np.ndarray, mean_depth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shannon entropy (bits) of each node's depth distribution, and its
    relative entropy against a Poisson distribution with the same mean.

    Depth 0 (the node itself) is excluded; nodes that reach nothing get NaN.
    """
    counts = depth_hist[:, 1:].astype(np.float64)
    reached = counts.sum(axis=1)
    ent = np.full(counts.shape[0], np.nan)
    rel = np.full(counts.shape[0], np.nan)
    k = np.arange(1, depth_hist.shape[1], dtype=np.float64)
    log_fact = np.array([math.lgamma(x + 1.0) for x in k])
    for v in np.flatnonzero(reached > 0):
        p = counts[v] / reached[v]
        nz = p > 0
        ent[v] = float(-(p[nz] * np.log2(p[nz])).sum())
        md = mean_depth[v]
        if np.isfinite(md) and md > 0:
            log_q = k * math.log(md) - md - log_fact
            rel[v] = float((p[nz] * (np.log2(p[nz]) - log_q[nz] / math.log(2.0))).sum())
    return ent, rel


def exact_local_metrics(graph: CompressedCsr) -> dict[str, np.ndarray]:
    """1-hop metrics via sparse products: A, A @ A and (A @ A) * A."""
    indptr, indices = graph.to_arrays()
    n = graph.n_nodes
    adj = sp.csr_matrix((np.ones(indices.size, dtype=np.int64), indices, indptr), shape=(n, n))
    deg = np.diff(indptr)
    two = adj @ adj
    reach2 = (two + adj).tocsr()
    reach2.setdiag(0)
    reach2.eliminate_zeros()
    n2 = np.diff(reach2.indptr)
    tri = np.asarray(two.multiply(adj).sum(axis=1)).ravel()
    control = np.zeros(n)
    for v in range(n):
        # ascending neighbour degree keeps the float sum numbering independent
        acc = 0.0
        for d in sorted(deg[indices[indptr[v]:indptr[v + 1]]].tolist()):
            acc += 1.0 / d
        control[v] = acc
    with np.errstate(divide="ignore", invalid="ignore"):
        controllability = np.where(n2 > 0, deg / np.where(n2 > 0, n2, 1), np.nan)
        pairs = deg * (deg - 1)
        clustering = np.where(deg >= 2, tri / np.where(pairs > 0, pairs, 1), np.nan)
    return {"connectivity": deg.astype(np.int64), "control": control,
            "controllability": controllability, "clustering": clustering}


# -- brute-force visibility ------------------------------------------------------

@njit(cache=True)
def _pairwise_visible(xs, ys, rows, cols, segs, r2_cells):
    n = xs.size
    pairs = []
    for u in range(n):
        for v in range(u + 1, n):
            dr = rows[v] - rows[u]
            dc = cols[v] - cols[u]
            if dr * dr + dc * dc > r2_cells:
                continue
            dx = xs[v] - xs[u]
            dy = ys[v] - ys[u]
            blocked = False
            for k in range(segs.shape[0]):
                x0, y0, x1, y1 = segs[k, 0], segs[k, 1], segs[k, 2], segs[k, 3]
                d1 = (x1 - x0) * (ys[u] - y0) - (y1 - y0) * (xs[u] - x0)
                d2 = (x1 - x0) * (ys[v] - y0) - (y1 - y0) * (xs[v] - x0)
                if d1 * d2 >= 0:
                    continue
                d3 = dx * (y0 - ys[u]) - dy * (x0 - xs[u])
                d4 = dx * (y1 - ys[u]) - dy * (x1 - xs[u])
                if d3 * d4 < 0:
                    blocked = True
                    break
            if not blocked:
                pairs.append((u, v))
    return pairs


def brute_force_visibility(grid: GridSpec, nodes: NodeSet, segments: np.ndarray,
                           radius: float = math.inf) -> list[list[int]]:
    """Adjacency where u ~ v iff the open sightline properly crosses no segment.

    Touching a segment endpoint or running along a segment does not block.
    """
    xs, ys = grid.cell_centres(nodes.cell_of_node)
    segs = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
    rows, cols = np.divmod(nodes.cell_of_node, grid.cols)
    r2 = math.inf if math.isinf(radius) else (radius / grid.spacing) ** 2
    adj: list[list[int]] = [[] for _ in range(len(nodes))]
    for u, v in _pairwise_visible(xs, ys, rows, cols, segs, r2):
        adj[u].append(v)
        adj[v].append(u)
    return [sorted(a) for a in adj]


# -- comparison -------------------------------------------------------------------

REPORT_HEADER = ("metric", "pearson_r", "spearman_rho", "median_rel_err", "n")


def average_ranks(x: np.ndarray) -> np.ndarray:
    return stats.rankdata(x, method="average")


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return math.nan
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / den if den > 0 else math.nan


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    return pearson(average_ranks(x), average_ranks(y))


def median_relative_error(est: np.ndarray, exact: np.ndarray) -> float:
    ok = exact != 0
    if not ok.any():
        return math.nan
    return float(np.median(np.abs(est[ok] - exact[ok]) / np.abs(exact[ok])))


@dataclass
class MetricComparison:
    metric: str
    pearson_r: float
    spearman_rho: float
    median_rel_err: float
    n: int


def compare(estimate, exact, metrics=None) -> list[MetricComparison]:
    """Per-metric agreement over nodes with finite values in both tables.

    Tables are matched on ``node_id``.
    """
    ids_a = np.asarray(estimate.node_id)
    ids_b = np.asarray(exact.node_id)
    common, ia, ib = np.intersect1d(ids_a, ids_b, return_indices=True)
    if common.size == 0:
        raise InputError("estimate and exact tables share no nodes")
    names = metrics or [c for c in estimate.FLOAT_COLUMNS]
    out = []
    for name in names:
        a = np.asarray(getattr(estimate, name), dtype=np.float64)[ia]
        b = np.asarray(getattr(exact, name), dtype=np.float64)[ib]
        ok = np.isfinite(a) & np.isfinite(b)
        a, b = a[ok], b[ok]
        if a.size < 2:
            out.append(MetricComparison(name, math.nan, math.nan, math.nan, int(a.size)))
            continue
        out.append(MetricComparison(name, pearson(a, b), spearman(a, b),
                                    median_relative_error(a, b), int(a.size)))
    return out


def report_csv(rows: list[MetricComparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in rows:
        w.writerow([r.metric, _fmt(r.pearson_r), _fmt(r.spearman_rho), _fmt(r.median_rel_err), r.n])
    return buf.getvalue()


def report_json(rows: list[MetricComparison]) -> str:
    return json.dumps([r.__dict__ for r in rows], indent=2, allow_nan=True)


def _fmt(x: float) -> str:
    return "NaN" if not math.isfinite(x) else repr(float(x))


def write_report(rows: list[MetricComparison], path: str | Path) -> None:
    text = report_json(rows) if str(path).endswith(".json") else report_csv(rows)
    Path(path).write_text(text)
