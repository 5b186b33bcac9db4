"""Polygon ingestion, open-space grid generation and obstacle rasterisation.

All coordinates are metres in a projected CRS. Cells are sampled at their
centres; cell ``(row, col)`` has index ``row * cols + col`` (raster order,
rows growing northwards from the bounding-box min corner).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import GeometryError, InputError

# Cell-unit tolerance used by the supercover walk for boundary-grazing ties.
RASTER_EPS = 1e-9


class WorldPoint(NamedTuple):
    x: float
    y: float


class Segment(NamedTuple):
    a: WorldPoint
    b: WorldPoint


@dataclass(frozen=True)
class Polygon:
    """A polygon as a tuple of closed rings (exterior first, then holes).

    Rings are stored without the repeated closing vertex.
    """

    rings: tuple[np.ndarray, ...]

    @classmethod
    def from_coords(cls, rings: Sequence[Sequence[Sequence[float]]]) -> "Polygon":
        out = []
        for ring in rings:
            arr = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
            if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
                arr = arr[:-1]
            if len(arr) < 3:
                raise GeometryError(f"polygon ring needs >= 3 vertices, got {len(arr)}")
            if not np.all(np.isfinite(arr)):
                raise GeometryError("polygon has non-finite coordinates")
            out.append(arr)
        if not out:
            raise GeometryError("polygon has no rings")
        return cls(tuple(out))

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return cls.from_coords([[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]])

    @property
    def exterior(self) -> np.ndarray:
        return self.rings[0]

    def bounds(self) -> tuple[float, float, float, float]:
        ext = self.exterior
        return (float(ext[:, 0].min()), float(ext[:, 1].min()),
                float(ext[:, 0].max()), float(ext[:, 1].max()))

    def area(self) -> float:
        """Unsigned area of the exterior minus the holes."""
        total = 0.0
        for k, ring in enumerate(self.rings):
            x, y = ring[:, 0], ring[:, 1]
            a = 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
            total += a if k == 0 else -a
        return total

    def edges(self) -> Iterable[tuple[float, float, float, float]]:
        for ring in self.rings:
            nxt = np.roll(ring, -1, axis=0)
            for (x0, y0), (x1, y1) in zip(ring, nxt):
                yield float(x0), float(y0), float(x1), float(y1)


@dataclass(frozen=True)
class GridSpec:
    origin: WorldPoint
    spacing: float
    rows: int
    cols: int

    def __post_init__(self):
        if not self.spacing > 0:
            raise GeometryError("grid spacing must be positive")
        if self.rows < 1 or self.cols < 1:
            raise GeometryError("grid needs at least one row and one column")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_centres(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cells = np.asarray(cells, dtype=np.int64)
        row, col = np.divmod(cells, self.cols)
        x = self.origin.x + (col + 0.5) * self.spacing
        y = self.origin.y + (row + 0.5) * self.spacing
        return x, y


@dataclass
class NodeSet:
    """Active cells, densely renumbered in raster order."""

    active: np.ndarray  # bool, one per cell
    node_of_cell: np.ndarray = field(init=False)  # int32, -1 for inactive cells
    cell_of_node: np.ndarray = field(init=False)  # int64

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=bool)
        self.cell_of_node = np.flatnonzero(self.active).astype(np.int64)
        self.node_of_cell = np.full(self.active.size, -1, dtype=np.int32)
        self.node_of_cell[self.cell_of_node] = np.arange(self.cell_of_node.size, dtype=np.int32)

    def __len__(self) -> int:
        return int(self.cell_of_node.size)


@dataclass
class ObstacleRaster:
    """Per-cell bins of obstacle segment indices in CSR layout."""

    segments: np.ndarray  # (S, 4) float64: x0, y0, x1, y1
    bin_offsets: np.ndarray  # (n_cells + 1,) int64
    bin_segments: np.ndarray  # int32

    def bin(self, cell: int) -> np.ndarray:
        return self.bin_segments[self.bin_offsets[cell]:self.bin_offsets[cell + 1]]


def point_in_polygon(p: tuple[float, float], poly: Polygon) -> bool:
    """Even-odd containment with the half-open edge rule.

    An edge counts as crossed when exactly one endpoint lies strictly above
    the point's y and the crossing lies strictly to the right of the point,
    so points on bottom/left edges are inside and points on top/right edges
    are outside.
    """
    px, py = p
    inside = False
    for x0, y0, x1, y1 in poly.edges():
        if (y0 > py) != (y1 > py):
            xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if px < xc:
                inside = not inside
    return inside


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, poly: Polygon) -> np.ndarray:
    """Vectorised :func:`point_in_polygon` over arrays of coordinates."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros(xs.shape, dtype=bool)
    for x0, y0, x1, y1 in poly.edges():
        straddle = (y0 > ys) != (y1 > ys)
        if not straddle.any():
            continue
        idx = np.flatnonzero(straddle)
        xc = x0 + (ys[idx] - y0) * (x1 - x0) / (y1 - y0)
        hit = idx[xs[idx] < xc]
        inside[hit] = ~inside[hit]
    return inside


def generate_grid(boundary: Polygon, buildings: Sequence[Polygon],
                  spacing: float) -> tuple[GridSpec, NodeSet]:
    if not spacing > 0:
        raise GeometryError(f"spacing must be > 0, got {spacing}")
    if not boundary.area() > 0:
        raise GeometryError("degenerate boundary polygon (zero area)")
    minx, miny, maxx, maxy = boundary.bounds()
    cols = max(1, math.ceil((maxx - minx) / spacing - 1e-9))
    rows = max(1, math.ceil((maxy - miny) / spacing - 1e-9))
    grid = GridSpec(WorldPoint(minx, miny), float(spacing), rows, cols)

    cx, cy = grid.cell_centres(np.arange(grid.n_cells))
    active = points_in_polygon(cx, cy, boundary)
    for poly in buildings:
        bx0, by0, bx1, by1 = poly.bounds()
        cand = np.flatnonzero(active & (cx >= bx0) & (cx <= bx1) & (cy >= by0) & (cy <= by1))
        if cand.size:
            active[cand[points_in_polygon(cx[cand], cy[cand], poly)]] = False
    if not active.any():
        raise GeometryError(
            f"zero active cells: {rows}x{cols} grid at spacing {spacing} m has no "
            "cell centre inside the boundary and outside every building")
    return grid, NodeSet(active)


def polygon_segments(buildings: Sequence[Polygon]) -> np.ndarray:
    segs = [e for poly in buildings for e in poly.edges() if (e[0], e[1]) != (e[2], e[3])]
    if not segs:
        return np.zeros((0, 4), dtype=np.float64)
    return np.asarray(segs, dtype=np.float64)


def supercover_cells(seg: Sequence[float], grid: GridSpec, eps: float = RASTER_EPS) -> list[int]:
    """Cells touched by a segment, walked column by column.

    Within each column strip the clipped sub-segment spans a y-interval; every
    row overlapping that interval (widened by ``eps`` cell units) is taken, so
    the result is a superset of the exact closed-cell intersection.
    """
    s = grid.spacing
    u0 = (seg[0] - grid.origin.x) / s
    v0 = (seg[1] - grid.origin.y) / s
    u1 = (seg[2] - grid.origin.x) / s
    v1 = (seg[3] - grid.origin.y) / s
    umin, umax = min(u0, u1), max(u0, u1)
    c_lo = max(0, math.floor(umin - eps))
    c_hi = min(grid.cols - 1, math.floor(umax + eps))
    out = []
    for c in range(c_lo, c_hi + 1):
        if u1 != u0:
            xa, xb = max(float(c), umin), min(float(c + 1), umax)
            if xa > xb:  # touched only within eps of the strip edge
                xa = xb = min(max(umin, float(c)), float(c + 1))
            ta, tb = (xa - u0) / (u1 - u0), (xb - u0) / (u1 - u0)
            va, vb = v0 + ta * (v1 - v0), v0 + tb * (v1 - v0)
            vlo, vhi = min(va, vb), max(va, vb)
        else:
            vlo, vhi = min(v0, v1), max(v0, v1)
        r_lo = max(0, math.floor(vlo - eps))
        r_hi = min(grid.rows - 1, math.floor(vhi + eps))
        out.extend(r * grid.cols + c for r in range(r_lo, r_hi + 1))
    return out


def rasterize_obstacles(buildings: Sequence[Polygon], grid: GridSpec) -> ObstacleRaster:
    segments = polygon_segments(buildings)
    cells: list[int] = []
    owners: list[int] = []
    for k, seg in enumerate(segments):
        hit = supercover_cells(seg, grid)
        cells.extend(hit)
        owners.extend([k] * len(hit))
    cells_arr = np.asarray(cells, dtype=np.int64)
    owners_arr = np.asarray(owners, dtype=np.int32)
    order = np.lexsort((owners_arr, cells_arr))
    counts = np.bincount(cells_arr, minlength=grid.n_cells)
    offsets = np.zeros(grid.n_cells + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return ObstacleRaster(segments, offsets, owners_arr[order])


# -- GeoJSON ---------------------------------------------------------------

def _geometry_polygons(geom: dict) -> list[Polygon]:
    kind = geom.get("type")
    coords = geom.get("coordinates")
    if kind == "Polygon":
        return [Polygon.from_coords(coords)]
    if kind == "MultiPolygon":
        return [Polygon.from_coords(part) for part in coords]
    if kind == "GeometryCollection":
        return [p for g in geom.get("geometries", []) for p in _geometry_polygons(g)]
    raise InputError(f"unsupported geometry type {kind!r} (expected Polygon/MultiPolygon)")


def parse_polygons(doc: dict) -> list[Polygon]:
    """Polygons from a GeoJSON FeatureCollection, Feature or bare geometry."""
    if not isinstance(doc, dict) or "type" not in doc:
        raise InputError("not a GeoJSON object")
    try:
        if doc["type"] == "FeatureCollection":
            return [p for feat in doc["features"] if feat.get("geometry")
                    for p in _geometry_polygons(feat["geometry"])]
        if doc["type"] == "Feature":
            return _geometry_polygons(doc["geometry"]) if doc.get("geometry") else []
        return _geometry_polygons(doc)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed GeoJSON: {exc}") from exc


def _read_json(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def load_buildings(path: str | Path) -> list[Polygon]:
    return parse_polygons(_read_json(path))


def load_boundary(path: str | Path) -> Polygon:
    polys = parse_polygons(_read_json(path))
    if len(polys) != 1:
        raise InputError(f"{path}: expected exactly one boundary polygon, found {len(polys)}")
    return polys[0]


def polygons_to_geojson(polys: Sequence[Polygon]) -> dict:
    feats = []
    for poly in polys:
        rings = [[*map(list, ring.tolist()), list(ring[0].tolist())] for ring in poly.rings]
        feats.append({"type": "Feature", "properties": {},
                      "geometry": {"type": "Polygon", "coordinates": rings}})
    return {"type": "FeatureCollection", "features": feats}
