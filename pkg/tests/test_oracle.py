import csv
import io
import json

import numpy as np
import pytest
from scipy import stats

from hypervga.errors import InputError
from hypervga.geometry import Polygon, generate_grid
from hypervga.metrics import local_metrics
from hypervga.oracle import (
    REPORT_HEADER,
    brute_force_visibility,
    compare,
    exact_bfs_all,
    exact_local_metrics,
    neighbourhood_identity_sum,
    pearson,
    report_csv,
    report_json,
    spearman,
)

from conftest import bfs_distances, cycle_graph, graph_from_edges, path_graph, random_graph


def test_small_examples():
    assert exact_bfs_all(path_graph(3)).sum_d.tolist() == [3, 2, 3]
    res = exact_bfs_all(cycle_graph(4))
    assert np.allclose(res.sum_d / 3, 4 / 3)


@pytest.mark.parametrize("seed", range(4))
def test_distances_match_python_bfs(seed):
    g, a = random_graph(60, 0.04, seed)
    adj = g.adjacency()
    res = exact_bfs_all(g)
    for v in range(60):
        dist = bfs_distances(adj, v)
        assert res.sum_d[v] == sum(dist.values())
        assert res.sum_d2[v] == sum(d * d for d in dist.values())
        hist = np.bincount(list(dist.values()), minlength=res.depth_hist.shape[1])
        assert res.depth_hist[v].tolist() == hist.tolist()


def test_depth_limit_truncates():
    g, _ = random_graph(50, 0.05, 9)
    adj = g.adjacency()
    res = exact_bfs_all(g, depth_limit=2)
    for v in range(50):
        dist = bfs_distances(adj, v)
        assert res.sum_d[v] == sum(d for d in dist.values() if d <= 2)


def test_limit_above_diameter_is_unlimited():
    g = path_graph(9)
    full = exact_bfs_all(g)
    assert full.max_depth == 8
    assert np.array_equal(exact_bfs_all(g, 8).depth_hist, full.depth_hist)
    assert np.array_equal(exact_bfs_all(g, 30).depth_hist, full.depth_hist)


@pytest.mark.parametrize("seed", range(3))
def test_neighbourhood_function_properties(seed):
    g, _ = random_graph(80, 0.03, seed)
    res = exact_bfs_all(g)
    nb = res.neighbourhood
    assert np.all(nb[:, 0] == 1)
    assert np.all(np.diff(nb, axis=1) >= 0)
    assert np.array_equal(nb[:, -1], g.node_sizes())
    assert np.array_equal(neighbourhood_identity_sum(nb), res.sum_d)


def test_components_match_union_find():
    g = graph_from_edges(9, [(0, 4), (4, 8), (1, 2), (3, 5), (5, 6)])
    res = exact_bfs_all(g)
    assert np.array_equal(res.component_id, g.component_id)
    assert res.component_size.tolist() == g.node_sizes().tolist()


def test_local_metrics_bit_equal(rng):
    for seed in range(4):
        g, _ = random_graph(70, 0.15, seed)
        a, b = exact_local_metrics(g), local_metrics(g)
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()


def test_brute_force_wall():
    wall = Polygon.rectangle(2.4, 0.0, 2.6, 2.0)
    grid, nodes = generate_grid(Polygon.rectangle(0, 0, 5, 3), [], 1.0)
    segs = np.array(list(wall.edges()))
    adj = brute_force_visibility(grid, nodes, segs)
    # (0.5, 0.5) to (4.5, 0.5) crosses the wall; (0.5, 2.5) to (4.5, 2.5) passes above it
    assert 4 not in adj[0]
    assert 14 in adj[10]
    assert all(u in adj[v] for u in range(15) for v in adj[u])


def test_brute_force_radius():
    grid, nodes = generate_grid(Polygon.rectangle(0, 0, 5, 5), [], 1.0)
    adj = brute_force_visibility(grid, nodes, np.zeros((0, 4)), radius=1.0)
    assert adj[12] == [7, 11, 13, 17]


# -- statistics -------------------------------------------------------------------

class _T:
    FLOAT_COLUMNS = ("visual_mean_depth",)

    def __init__(self, ids, md):
        self.node_id = np.asarray(ids)
        self.visual_mean_depth = np.asarray(md, dtype=float)


def test_spearman_is_pearson_of_ranks(rng):
    x = rng.normal(size=200)
    y = x + rng.normal(size=200)
    rx = np.argsort(np.argsort(x)) + 1
    ry = np.argsort(np.argsort(y)) + 1
    assert spearman(x, y) == pytest.approx(pearson(rx, ry), abs=1e-12)
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)


def test_spearman_ties_use_average_ranks():
    x = np.array([1, 2, 2, 3.0])
    y = np.array([1, 2, 3, 4.0])
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic)


def test_compare_identity_and_shift():
    md = np.array([1.5, 2.0, 3.0, 4.0])
    row = compare(_T(range(4), md), _T(range(4), md))[0]
    assert (row.pearson_r, row.spearman_rho, row.median_rel_err, row.n) == (1.0, 1.0, 0.0, 4)
    row = compare(_T(range(4), md * 1.1), _T(range(4), md))[0]
    assert row.pearson_r == pytest.approx(1.0)
    assert row.median_rel_err == pytest.approx(0.1)


def test_compare_matches_on_ids_and_skips_nan():
    a = _T([3, 1, 2, 0], [4.0, 2.0, np.nan, 1.0])
    b = _T([0, 1, 2, 3], [1.0, 2.0, 3.0, 4.0])
    row = compare(a, b)[0]
    assert row.n == 3 and row.median_rel_err == 0.0


def test_compare_disjoint_raises():
    with pytest.raises(InputError):
        compare(_T([0, 1], [1, 2]), _T([5, 6], [1, 2]))


def test_report_formats():
    md = np.array([1.0, 2.0, 3.0])
    rows = compare(_T(range(3), md), _T(range(3), md))
    parsed = list(csv.reader(io.StringIO(report_csv(rows))))
    assert tuple(parsed[0]) == REPORT_HEADER
    assert parsed[1][0] == "visual_mean_depth" and parsed[1][4] == "3"
    assert json.loads(report_json(rows))[0]["pearson_r"] == 1.0
