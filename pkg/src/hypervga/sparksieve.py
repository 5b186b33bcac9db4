"""Angular-sweep visibility (sparkSieve style) over the open-space grid.

For each source cell the plane is split into eight octants. Inside an octant
a cell is addressed by ``(along, across)`` offsets with ``0 <= across <=
along``; its direction is the tan value ``across / along`` in ``[0, 1]``.
Rings are expanded by increasing ``along``. A sorted list of open tan gaps
is kept; at ring ``a`` every obstacle segment found so far is clipped to the
half-strip ``0 < along <= a`` and its tan projection is subtracted from the
gaps. Cell centres of ring ``a`` whose tan lies in a surviving gap are
visible. The octant stops once no gap is left.

Because all centres of ring ``a`` sit on the line ``along = a``, an obstacle
blocks a ring cell exactly when its clipped portion covers that cell's tan,
so the sweep reproduces the segment-intersection definition of visibility.
Obstacle segments are only gathered from raster bins of cells that can still
be seen through a gap, which keeps the work proportional to the visible
area rather than to the whole grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .geometry import GridSpec, NodeSet, ObstacleRaster, Segment, WorldPoint

TAN_EPS = 1e-9
# along-axis clip that keeps tan values finite for segments through ring 0
_ALONG_MIN = 1e-9

# (along_x, along_y, across_x, across_y) per octant; octant k covers
# directions between k*45 and (k+1)*45 degrees.
OCTANTS = np.array([
    [1, 0, 0, 1],
    [0, 1, 1, 0],
    [0, 1, -1, 0],
    [-1, 0, 0, 1],
    [-1, 0, 0, -1],
    [0, -1, -1, 0],
    [0, -1, 1, 0],
    [1, 0, 0, -1],
], dtype=np.int64)


class TanGap(NamedTuple):
    lo: float
    hi: float


@dataclass(frozen=True)
class SweepParams:
    radius: float = math.inf  # metres; inf means unlimited

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("visibility radius must be > 0 or unlimited")


@njit(cache=True, nogil=True)
def _project(x0, y0, x1, y1, cx, cy, s, ax, ay, bx, by, ring):
    """Tan interval blocked at ``ring`` by the segment's part with along in (0, ring].

    Returns ``(lo, hi, ok, retire)``; ``retire`` is set once the whole
    segment lies at along <= ring (or behind the source) so later rings can
    skip it.
    """
    du0 = (x0 - cx) / s
    dv0 = (y0 - cy) / s
    du1 = (x1 - cx) / s
    dv1 = (y1 - cy) / s
    pa = du0 * ax + dv0 * ay
    pb = du0 * bx + dv0 * by
    qa = du1 * ax + dv1 * ay
    qb = du1 * bx + dv1 * by
    if pa > qa:
        pa, qa = qa, pa
        pb, qb = qb, pb
    if qa <= _ALONG_MIN:
        return 0.0, 0.0, False, True
    if pa > ring:
        return 0.0, 0.0, False, False
    retire = qa <= ring
    if pa < _ALONG_MIN:
        f = (_ALONG_MIN - pa) / (qa - pa)
        pb = pb + f * (qb - pb)
        pa = _ALONG_MIN
    if qa > ring:
        f = (ring - pa) / (qa - pa)
        qb = pb + f * (qb - pb)
        qa = ring
    t0 = pb / pa
    t1 = qb / qa
    lo = min(t0, t1)
    hi = max(t0, t1)
    lo = max(lo, 0.0)
    hi = min(hi, 1.0)
    return lo, hi, hi > lo, retire


@njit(cache=True, nogil=True)
def _subtract(glo, ghi, ng, lo, hi, olo, ohi, eps):
    """Remove the open interval (lo, hi) from closed gaps; returns new count."""
    k = 0
    for i in range(ng):
        a = glo[i]
        b = ghi[i]
        if hi <= a or lo >= b:
            olo[k] = a
            ohi[k] = b
            k += 1
            continue
        if lo - a >= eps:
            olo[k] = a
            ohi[k] = lo
            k += 1
        if b - hi >= eps:
            olo[k] = hi
            ohi[k] = b
            k += 1
    return k


@njit(cache=True, nogil=True)
def _sweep(src_cell, stamp, rows, cols, ox, oy, s, node_of_cell, segs, boff, bseg,
           r_cells, r2, eps, cell_mark, seg_mark, seg_ctr, active, glo, ghi, tlo, thi, out, n_out):
    """Mark all cells visible from ``src_cell``; appends node ids to ``out``."""
    sr = src_cell // cols
    sc = src_cell % cols
    cx = ox + (sc + 0.5) * s
    cy = oy + (sr + 0.5) * s
    for k in range(8):
        ax = OCTANTS[k, 0]
        ay = OCTANTS[k, 1]
        bx = OCTANTS[k, 2]
        by = OCTANTS[k, 3]
        if ax == 1:
            amax = cols - 1 - sc
        elif ax == -1:
            amax = sc
        elif ay == 1:
            amax = rows - 1 - sr
        else:
            amax = sr
        if bx == 1:
            bmax = cols - 1 - sc
        elif bx == -1:
            bmax = sc
        elif by == 1:
            bmax = rows - 1 - sr
        else:
            bmax = sr
        if r_cells < amax:
            amax = int(math.floor(r_cells))
        seg_ctr += 1
        n_active = 0
        ng = 1
        glo[0] = 0.0
        ghi[0] = 1.0
        for a in range(0, amax + 1):
            # gather obstacle bins of ring cells that can still be seen
            af = float(a)
            for g in range(ng):
                jlo = int(math.floor(glo[g] * max(af - 0.5, 0.0) + 0.5)) - 1
                jhi = int(math.floor(ghi[g] * (af + 0.5) + 0.5)) + 1
                for j in range(jlo, jhi + 1):
                    col = sc + a * ax + j * bx
                    row = sr + a * ay + j * by
                    if col < 0 or col >= cols or row < 0 or row >= rows:
                        continue
                    cell = row * cols + col
                    for e in range(boff[cell], boff[cell + 1]):
                        sid = bseg[e]
                        if seg_mark[sid] != seg_ctr:
                            seg_mark[sid] = seg_ctr
                            active[n_active] = sid
                            n_active += 1
            if a == 0:
                continue
            # project and subtract; compact away retired segments
            keep = 0
            for i in range(n_active):
                sid = active[i]
                lo, hi, ok, retire = _project(segs[sid, 0], segs[sid, 1], segs[sid, 2],
                                              segs[sid, 3], cx, cy, s, ax, ay, bx, by, af)
                if ok and ng > 0:
                    ng = _subtract(glo, ghi, ng, lo, hi, tlo, thi, eps)
                    for g in range(ng):
                        glo[g] = tlo[g]
                        ghi[g] = thi[g]
                if not retire:
                    active[keep] = sid
                    keep += 1
            n_active = keep
            if ng == 0:
                break
            # ring cells inside surviving gaps
            for g in range(ng):
                b0 = int(math.ceil(glo[g] * af))
                b1 = int(math.floor(ghi[g] * af))
                if b0 < 0:
                    b0 = 0
                if b1 > a:
                    b1 = a
                if b1 > bmax:
                    b1 = bmax
                for b in range(b0, b1 + 1):
                    t = b / af
                    if t < glo[g] or t > ghi[g]:
                        continue
                    if a * a + b * b > r2:
                        continue
                    col = sc + a * ax + b * bx
                    row = sr + a * ay + b * by
                    cell = row * cols + col
                    nid = node_of_cell[cell]
                    if nid < 0 or cell_mark[cell] == stamp:
                        continue
                    cell_mark[cell] = stamp
                    if n_out >= out.size:
                        bigger = np.empty(out.size * 2, dtype=out.dtype)
                        bigger[:n_out] = out[:n_out]
                        out = bigger
                    out[n_out] = nid
                    n_out += 1
    return out, n_out, seg_ctr


@njit(cache=True, nogil=True)
def visible_chunk(src_nodes, cell_of_node, node_of_cell, rows, cols, ox, oy, s,
                  segs, boff, bseg, r_cells, r2, eps):
    """Sorted visible node ids for each source; returns (counts, flat ids)."""
    n_seg = segs.shape[0]
    cell_mark = np.zeros(rows * cols, dtype=np.int64)
    seg_mark = np.zeros(max(n_seg, 1), dtype=np.int64)
    active = np.empty(max(n_seg, 1), dtype=np.int64)
    glo = np.empty(n_seg + 2, dtype=np.float64)
    ghi = np.empty(n_seg + 2, dtype=np.float64)
    tlo = np.empty(n_seg + 2, dtype=np.float64)
    thi = np.empty(n_seg + 2, dtype=np.float64)
    out = np.empty(1024, dtype=np.int32)
    counts = np.zeros(src_nodes.size, dtype=np.int64)
    n_out = 0
    seg_ctr = 0
    for i in range(src_nodes.size):
        start = n_out
        cell = cell_of_node[src_nodes[i]]
        out, n_out, seg_ctr = _sweep(cell, src_nodes[i] + 1, rows, cols, ox, oy, s, node_of_cell,
                                     segs, boff, bseg, r_cells, r2, eps, cell_mark, seg_mark,
                                     seg_ctr, active, glo, ghi, tlo, thi, out, n_out)
        out[start:n_out].sort()
        counts[i] = n_out - start
    return counts, out[:n_out].copy()


def _radius_cells(params: SweepParams, grid: GridSpec) -> tuple[float, float]:
    """Radius in cell units and its square (compared against integer offsets)."""
    if math.isinf(params.radius):
        return float(grid.rows + grid.cols + 2), math.inf
    r = params.radius / grid.spacing
    return r, (params.radius / grid.spacing) ** 2


def visible_sources(sources: np.ndarray, grid: GridSpec, nodes: NodeSet,
                    obstacles: ObstacleRaster, params: SweepParams) -> list[np.ndarray]:
    """Visibility rows for a batch of sources (safe to call from several threads)."""
    sources = np.ascontiguousarray(sources, dtype=np.int64)
    counts, flat = visible_chunk(
        sources, nodes.cell_of_node, nodes.node_of_cell, grid.rows, grid.cols,
        grid.origin.x, grid.origin.y, grid.spacing, obstacles.segments,
        obstacles.bin_offsets, obstacles.bin_segments, *_radius_cells(params, grid), TAN_EPS)
    return np.split(flat, np.cumsum(counts)[:-1])


def visible_cells(source: int, grid: GridSpec, nodes: NodeSet, obstacles: ObstacleRaster,
                  params: SweepParams = SweepParams()) -> np.ndarray:
    """Node ids visible from ``source``, sorted ascending, source excluded."""
    return visible_sources(np.array([source]), grid, nodes, obstacles, params)[0]


def project_segment_to_tanspace(seg: Segment, source: WorldPoint, octant: int, depth_ring: int,
                                spacing: float = 1.0) -> list[TanGap]:
    """Tan interval occluded at ``depth_ring`` by the part of ``seg`` up to that ring."""
    ax, ay, bx, by = (int(v) for v in OCTANTS[octant])
    lo, hi, ok, _ = _project(seg.a.x, seg.a.y, seg.b.x, seg.b.y, source.x, source.y,
                             spacing, ax, ay, bx, by, float(depth_ring))
    return [TanGap(lo, hi)] if ok else []


def subtract_gaps(gaps: Sequence[tuple[float, float]], blocked: Sequence[tuple[float, float]],
                  epsilon: float = TAN_EPS) -> list[TanGap]:
    n = len(gaps) + 2 * len(blocked) + 1
    glo = np.zeros(n)
    ghi = np.zeros(n)
    tlo = np.zeros(n)
    thi = np.zeros(n)
    ng = len(gaps)
    for i, (lo, hi) in enumerate(gaps):
        glo[i], ghi[i] = lo, hi
    for lo, hi in blocked:
        ng = _subtract(glo, ghi, ng, float(lo), float(hi), tlo, thi, epsilon)
        glo[:ng], ghi[:ng] = tlo[:ng], thi[:ng]
    return [TanGap(float(glo[i]), float(ghi[i])) for i in range(ng)]
