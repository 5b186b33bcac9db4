import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from hypervga.components import UnionFind
from hypervga.oracle import _flood_fill

from conftest import rows_from_edges


def test_fresh_and_single_union():
    uf = UnionFind(5)
    assert [uf.find(k) for k in range(5)] == list(range(5))
    assert uf.union(0, 1)
    assert uf.find(0) == uf.find(1)
    assert not uf.union(1, 0)


def test_isolated_path_and_triangles():
    uf = UnionFind(6)
    comp, sizes = uf.finalize()
    assert sizes.tolist() == [1] * 6 and comp.tolist() == list(range(6))

    uf = UnionFind(6)
    for k in range(5):
        uf.union(k, k + 1)
    assert uf.finalize()[1].tolist() == [6]

    uf = UnionFind(6)
    for u, v in [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]:
        uf.union(u, v)
    comp, sizes = uf.finalize()
    assert sizes.tolist() == [3, 3]
    assert comp.tolist() == [0, 0, 0, 1, 1, 1]


def test_ids_by_first_occurrence():
    uf = UnionFind(5)
    uf.union(4, 1)
    uf.union(3, 0)
    comp, sizes = uf.finalize()
    assert comp.tolist() == [0, 1, 2, 0, 1]
    assert sizes.tolist() == [2, 2, 1]


def _partition(labels):
    groups = {}
    for v, c in enumerate(labels):
        groups.setdefault(int(c), set()).add(v)
    return sorted(map(frozenset, groups.values()), key=min)


def test_random_unions_match_flood_fill(rng):
    n = 1000
    edges = rng.integers(0, n, size=(700, 2))
    uf = UnionFind(n)
    for u, v in edges:
        uf.union(int(u), int(v))
    comp, sizes = uf.finalize()
    rows = rows_from_edges(n, edges.tolist())
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    indices = np.array([w for r in rows for w in r], dtype=np.int32)
    label, count = _flood_fill(indptr, indices)
    assert _partition(comp) == _partition(label)
    assert sizes.sum() == n and sizes.size == count
    # dense ids in first-occurrence order coincide with flood-fill labels
    assert np.array_equal(comp, label)


@given(st.lists(st.tuples(st.integers(0, 29), st.integers(0, 29)), max_size=60), st.randoms())
def test_partition_independent_of_edge_order(edges, rnd):
    a = UnionFind(30)
    for u, v in edges:
        a.union(u, v)
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    b = UnionFind(30)
    for u, v in shuffled:
        b.union(v, u)
    ca, sa = a.finalize()
    cb, sb = b.finalize()
    assert np.array_equal(ca, cb) and np.array_equal(sa, sb)


def test_union_row():
    uf = UnionFind(6)
    uf.union_row(2, np.array([0, 4, 5]))
    comp, sizes = uf.finalize()
    assert comp.tolist() == [0, 1, 0, 2, 0, 0]
