import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypervga.errors import GeometryError
from hypervga.geometry import Polygon, Segment, WorldPoint, generate_grid, polygon_segments, rasterize_obstacles
from hypervga.oracle import brute_force_visibility
from hypervga.sparksieve import (
    SweepParams,
    TanGap,
    project_segment_to_tanspace,
    subtract_gaps,
    visible_cells,
    visible_sources,
)


def _setup(size, buildings, spacing=1.0):
    grid, nodes = generate_grid(Polygon.rectangle(0, 0, size, size), buildings, spacing)
    return grid, nodes, rasterize_obstacles(buildings, grid)


def _all_rows(grid, nodes, raster, radius=math.inf):
    return [r.tolist() for r in visible_sources(np.arange(len(nodes)), grid, nodes, raster,
                                                SweepParams(radius))]


def random_town(rng, size, n_blocks):
    blds = []
    for _ in range(n_blocks):
        w, h = rng.uniform(1, size / 4, 2)
        x0, y0 = rng.uniform(0, size - w), rng.uniform(0, size - h)
        blds.append(Polygon.rectangle(x0, y0, x0 + w, y0 + h))
    return blds


def test_open_field_sees_everything():
    grid, nodes, raster = _setup(8, [])
    n = len(nodes)
    for s in (0, 9, 63):
        assert visible_cells(s, grid, nodes, raster).tolist() == [v for v in range(n) if v != s]


def test_wall_blocks_line_of_sight():
    # a thin block between x=4.6 and x=5.4 spanning y=2..7
    wall = Polygon.rectangle(4.6, 2.0, 5.4, 7.0)
    grid, nodes, raster = _setup(10, [wall])
    a = nodes.node_of_cell[4 * 10 + 1]
    b = nodes.node_of_cell[4 * 10 + 8]
    assert b not in visible_cells(a, grid, nodes, raster)
    c = nodes.node_of_cell[9 * 10 + 5]  # sightline passes above the block
    assert c in visible_cells(a, grid, nodes, raster)


def test_matches_brute_force_on_30x30_with_five_blocks(rng):
    blds = random_town(rng, 30, 5)
    grid, nodes, raster = _setup(30, blds)
    want = brute_force_visibility(grid, nodes, polygon_segments(blds))
    assert _all_rows(grid, nodes, raster) == want


@pytest.mark.parametrize("radius", [3.0, 5.0, 7.5])
def test_radius_matches_brute_force(rng, radius):
    blds = random_town(rng, 16, 4)
    grid, nodes, raster = _setup(16, blds)
    want = brute_force_visibility(grid, nodes, polygon_segments(blds), radius)
    assert _all_rows(grid, nodes, raster, radius) == want


def test_rotated_buildings_match_brute_force(rng):
    blds = []
    for _ in range(4):
        cx, cy = rng.uniform(3, 17, 2)
        t = rng.uniform(0, math.pi)
        a, b = rng.uniform(1, 3, 2)
        u = np.array([math.cos(t), math.sin(t)])
        w = np.array([-math.sin(t), math.cos(t)])
        c = np.array([cx, cy])
        ring = [c + a * u + b * w, c - a * u + b * w, c - a * u - b * w, c + a * u - b * w]
        blds.append(Polygon.from_coords([[p.tolist() for p in ring]]))
    grid, nodes, raster = _setup(20, blds)
    assert _all_rows(grid, nodes, raster) == brute_force_visibility(grid, nodes, polygon_segments(blds))


@given(st.integers(0, 2**32 - 1))
def test_symmetric_and_sorted(seed):
    rng = np.random.default_rng(seed)
    blds = random_town(rng, 12, 3)
    try:
        grid, nodes, raster = _setup(12, blds)
    except GeometryError:
        return  # everything covered
    rows = _all_rows(grid, nodes, raster)
    for u, row in enumerate(rows):
        assert row == sorted(set(row)) and u not in row
        for v in row:
            assert u in rows[v]


def test_enclosed_room_stays_inside():
    # closed room of walls; the outer ring of cells is out of sight
    room = [Polygon.rectangle(2, 2, 10, 2.5), Polygon.rectangle(2, 9.5, 10, 10),
            Polygon.rectangle(2, 2, 2.5, 10), Polygon.rectangle(9.5, 2, 10, 10)]
    grid, nodes, raster = _setup(12, room)
    src = nodes.node_of_cell[6 * 12 + 6]
    for v in visible_cells(src, grid, nodes, raster):
        r, c = divmod(int(nodes.cell_of_node[v]), 12)
        assert 3 <= r <= 8 and 3 <= c <= 8


def test_concurrent_calls_agree(rng):
    blds = random_town(rng, 20, 5)
    grid, nodes, raster = _setup(20, blds)
    ref = _all_rows(grid, nodes, raster)
    srcs = np.array_split(np.arange(len(nodes)), 8)
    with ThreadPoolExecutor(4) as pool:
        parts = list(pool.map(lambda s: visible_sources(s, grid, nodes, raster, SweepParams()), srcs))
    assert [r.tolist() for p in parts for r in p] == ref


def test_invalid_radius():
    with pytest.raises(ValueError):
        SweepParams(0.0)


# -- tan-space helpers --------------------------------------------------------

def test_project_outside_wedge_is_empty():
    # octant 0 looks east with across = +y; a segment to the west is behind
    seg = Segment(WorldPoint(-3, -1), WorldPoint(-3, 1))
    assert project_segment_to_tanspace(seg, WorldPoint(0, 0), 0, 5) == []


def test_project_full_wedge():
    seg = Segment(WorldPoint(2, -1), WorldPoint(2, 5))
    assert project_segment_to_tanspace(seg, WorldPoint(0, 0), 0, 3) == [TanGap(0.0, 1.0)]


def test_project_oblique_against_ray_casting(rng):
    src = WorldPoint(0.0, 0.0)
    for _ in range(20):
        a = WorldPoint(*rng.uniform([0.5, 0], [6, 6]))
        b = WorldPoint(*rng.uniform([0.5, 0], [6, 6]))
        ring = 4
        got = project_segment_to_tanspace(Segment(a, b), src, 0, ring)
        for tau in np.linspace(0.0005, 0.9995, 1000):
            # ray (1, tau) hits the segment at along <= ring?
            d = np.array([1.0, tau])
            e = np.array([b.x - a.x, b.y - a.y])
            den = d[0] * (-e[1]) - d[1] * (-e[0])
            if abs(den) < 1e-12:
                continue
            rhs = np.array([a.x, a.y])
            s = (rhs[0] * (-e[1]) - rhs[1] * (-e[0])) / den
            u = (d[0] * rhs[1] - d[1] * rhs[0]) / den
            hit = 0 <= u <= 1 and 0 < s <= ring
            inside = bool(got) and got[0].lo <= tau <= got[0].hi
            if abs(u) > 1e-6 and abs(u - 1) > 1e-6 and abs(s - ring) > 1e-6:
                assert hit == inside


def test_subtract_gaps_examples():
    assert subtract_gaps([(0, 1)], []) == [(0, 1)]
    assert subtract_gaps([(0, 1)], [(0, 1)]) == []
    assert subtract_gaps([(0, 1)], [(0.25, 0.5)]) == [(0, 0.25), (0.5, 1)]


def test_subtract_drops_slivers():
    assert subtract_gaps([(0, 1)], [(1e-12, 1)]) == []
    assert subtract_gaps([(0, 1)], [(0.2, 0.3), (0.3, 0.4)]) == [(0, 0.2), (0.4, 1)]
