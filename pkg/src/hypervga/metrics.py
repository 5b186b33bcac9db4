"""Per-node VGA metrics from distance sums plus exact 1-hop structure.

Depth-based metrics (mean depth, the three integrations and the moments)
take the accumulated ``sum_d`` / ``sum_d2`` from either HyperBall or the
exact oracle. Local metrics are always exact. Tables are kept in original
node-id order, so a Hilbert-reordered graph produces the same rows.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from numba import njit, prange

from .cgraph import CompressedCsr
from .errors import InputError

CSV_HEADER = ("x", "y", "node_id", "component_id", "node_count", "connectivity",
              "visual_mean_depth", "integration_hh", "integration_tekl", "integration_pv",
              "control", "controllability", "clustering", "entropy", "rel_entropy",
              "first_moment", "second_moment")


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def mean_depth(sum_d, n_v):
    """sum_d / (N_v - 1); NaN for isolated nodes."""
    sum_d, n_v = _arr(sum_d), _arr(n_v)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(n_v >= 2, sum_d / (n_v - 1), np.nan)
    return out[()] if out.ndim == 0 else out


def diamond_value(k):
    """Relative asymmetry of the root of a diamond-shaped graph with k nodes."""
    k = _arr(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2.0 * (k * (np.log2((k + 2.0) / 3.0) - 1.0) + 1.0) / ((k - 1.0) * (k - 2.0))


def relative_asymmetry(md, n_v):
    md, n_v = _arr(md), _arr(n_v)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n_v >= 3, 2.0 * (md - 1.0) / (n_v - 2.0), np.nan)


def integration_hh(md, n_v):
    """1 / RRA; NaN unless N_v >= 3 and MD > 1."""
    md, n_v = _arr(md), _arr(n_v)
    ra = relative_asymmetry(md, n_v)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where((n_v >= 3) & (md > 1.0), diamond_value(n_v) / ra, np.nan)
    return out[()] if out.ndim == 0 else out


def integration_tekl(md):
    md = _arr(md)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log2((md + 2.0) / 3.0)
    return out[()] if out.ndim == 0 else out


def integration_pv(md, n_v):
    """max(0, 1 - RA), clipped to [0, 1]; NaN below three nodes."""
    ra = relative_asymmetry(md, n_v)
    out = np.clip(1.0 - ra, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def moments(md, deg, sum_d2, n_v):
    """(MD * deg, sum_d2 / (N_v - 1))."""
    first = _arr(md) * _arr(deg)
    second = mean_depth(sum_d2, n_v)
    return (first[()] if first.ndim == 0 else first), second


def entropy_placeholder() -> float:
    return math.nan


@njit(cache=True)
def _local_one(v, indptr, indices, mark, buf):
    d = indptr[v + 1] - indptr[v]
    for e in range(indptr[v], indptr[v + 1]):
        w = indices[e]
        buf[e - indptr[v]] = indptr[w + 1] - indptr[w]
    # summing reciprocals in ascending degree order makes control independent
    # of the node numbering
    degs = np.sort(buf[:d])
    control = 0.0
    for k in range(d):
        control += 1.0 / degs[k]
    mark[v] = v
    for e in range(indptr[v], indptr[v + 1]):
        mark[indices[e]] = v
    n2 = d
    tri = 0
    for e in range(indptr[v], indptr[v + 1]):
        w = indices[e]
        for f in range(indptr[w], indptr[w + 1]):
            x = indices[f]
            if mark[x] != v:
                mark[x] = v
                n2 += 1
    # second pass for ordered neighbour pairs that are adjacent
    for e in range(indptr[v], indptr[v + 1]):
        mark[indices[e]] = -2 - v
    for e in range(indptr[v], indptr[v + 1]):
        w = indices[e]
        for f in range(indptr[w], indptr[w + 1]):
            if mark[indices[f]] == -2 - v:
                tri += 1
    controllability = d / n2 if n2 > 0 else np.nan
    clustering = tri / (d * (d - 1)) if d >= 2 else np.nan
    return control, controllability, clustering


@njit(cache=True, parallel=True)
def _local_all(indptr, indices, n_chunks):
    n = indptr.size - 1
    control = np.empty(n)
    ctl = np.empty(n)
    clus = np.empty(n)
    maxdeg = 0
    for v in range(n):
        maxdeg = max(maxdeg, indptr[v + 1] - indptr[v])
    step = (n + n_chunks - 1) // n_chunks
    for c in prange(n_chunks):
        mark = np.full(n, -1, dtype=np.int64)
        buf = np.empty(max(maxdeg, 1), dtype=np.int64)
        for v in range(c * step, min(n, (c + 1) * step)):
            control[v], ctl[v], clus[v] = _local_one(v, indptr, indices, mark, buf)
    return control, ctl, clus


def local_metrics(graph: CompressedCsr, v: int | None = None):
    """Connectivity, control, controllability and clustering.

    With ``v`` given returns a 4-tuple for that node, otherwise a dict of
    arrays over all nodes (in the graph's own numbering).
    """
    indptr, indices = graph.to_arrays()
    if v is not None:
        if not 0 <= v < graph.n_nodes:
            raise IndexError(f"node {v} out of range")
        mark = np.full(graph.n_nodes, -1, dtype=np.int64)
        buf = np.empty(max(int(np.diff(indptr).max(initial=0)), 1), dtype=np.int64)
        c, k, cl = _local_one(v, indptr, indices, mark, buf)
        return int(indptr[v + 1] - indptr[v]), c, k, cl
    n_chunks = max(1, min(64, graph.n_nodes))
    control, ctl, clus = _local_all(indptr, indices, n_chunks)
    return {"connectivity": np.diff(indptr).astype(np.int64), "control": control,
            "controllability": ctl, "clustering": clus}


# -- table ---------------------------------------------------------------------------

@dataclass
class MetricTable:
    """Columnar metric rows, one per node, sorted by original node id."""

    x: np.ndarray
    y: np.ndarray
    node_id: np.ndarray
    component_id: np.ndarray
    node_count: np.ndarray
    connectivity: np.ndarray
    visual_mean_depth: np.ndarray
    integration_hh: np.ndarray
    integration_tekl: np.ndarray
    integration_pv: np.ndarray
    control: np.ndarray
    controllability: np.ndarray
    clustering: np.ndarray
    entropy: np.ndarray
    rel_entropy: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray

    INT_COLUMNS = ("node_id", "component_id", "node_count", "connectivity")
    FLOAT_COLUMNS = ("visual_mean_depth", "integration_hh", "integration_tekl",
                     "integration_pv", "control", "controllability", "clustering",
                     "entropy", "rel_entropy", "first_moment", "second_moment")

    def __len__(self) -> int:
        return int(self.node_id.size)

    def row(self, i: int) -> dict:
        return {f.name: getattr(self, f.name)[i] for f in fields(self)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        cols = [getattr(self, name).tolist() for name in CSV_HEADER]
        is_int = [name in self.INT_COLUMNS for name in CSV_HEADER]
        for vals in zip(*cols):
            w.writerow([str(int(v)) if k else _fmt(v) for v, k in zip(vals, is_int)])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path: str | Path) -> "MetricTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise InputError(f"{path}: unexpected metrics header")
            rows = list(reader)
        cols = list(zip(*rows)) if rows else [()] * len(CSV_HEADER)
        data = {}
        for name, col in zip(CSV_HEADER, cols):
            dtype = np.int64 if name in cls.INT_COLUMNS else np.float64
            data[name] = np.array(col, dtype=np.float64).astype(dtype)
        return cls(**data)


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else "NaN"


def metric_table(graph: CompressedCsr, sum_d: np.ndarray, sum_d2: np.ndarray,
                 entropy: np.ndarray | None = None,
                 rel_entropy: np.ndarray | None = None) -> MetricTable:
    """Assemble all metrics; inputs are indexed in the graph's numbering."""
    n = graph.n_nodes
    if len(sum_d) != n or len(sum_d2) != n:
        raise InputError("distance sums do not match the graph size")
    n_v = graph.node_sizes()
    local = local_metrics(graph)
    deg = local["connectivity"]
    md = mean_depth(sum_d, n_v)
    first, second = moments(md, deg, sum_d2, n_v)
    x, y = graph.node_xy()
    nan = np.full(n, np.nan)
    cols = dict(
        x=x, y=y, node_id=graph.original_ids(),
        component_id=graph.component_id.astype(np.int64), node_count=n_v,
        connectivity=deg, visual_mean_depth=md, integration_hh=integration_hh(md, n_v),
        integration_tekl=integration_tekl(md), integration_pv=integration_pv(md, n_v),
        control=local["control"], controllability=local["controllability"],
        clustering=local["clustering"],
        entropy=nan if entropy is None else np.asarray(entropy, dtype=np.float64),
        rel_entropy=nan.copy() if rel_entropy is None else np.asarray(rel_entropy, np.float64),
        first_moment=first, second_moment=second)
    order = np.argsort(cols["node_id"], kind="stable")
    return MetricTable(**{k: np.asarray(v)[order] for k, v in cols.items()})
