import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypervga.cgraph import (
    CsrBuilder,
    _encode_rows,
    build_from_rows,
    build_from_source,
    encode_neighbor_row,
    hilbert_index,
    hilbert_order_for,
    hilbert_reorder,
    leb128_decode,
    leb128_encode,
    load_vgacsr,
    neighbors,
    permute,
    save_vgacsr,
)
from hypervga.errors import (
    BadMagicError,
    ChecksumError,
    CorruptStreamError,
    OrderingError,
    TruncatedFileError,
    VersionError,
)
from hypervga.geometry import Polygon
from hypervga.pipeline import build_graph

from conftest import random_graph


def test_leb128_examples():
    assert leb128_encode(0) == b"\x00"
    assert leb128_encode(127) == b"\x7f"
    assert leb128_encode(300) == b"\xac\x02"
    assert leb128_decode(b"\x00") == (0, 1)
    assert leb128_decode(b"\xac\x02") == (300, 2)


def test_leb128_errors():
    with pytest.raises(CorruptStreamError):
        leb128_decode(b"\x80")
    with pytest.raises(CorruptStreamError):
        leb128_decode(b"\xff" * 11)
    with pytest.raises(ValueError):
        leb128_encode(-1)


@given(st.integers(0, 2**64 - 1))
def test_leb128_round_trip(x):
    enc = leb128_encode(x)
    assert leb128_decode(enc) == (x, len(enc))
    assert len(enc) == max(1, -(-x.bit_length() // 7))


def test_million_varints_round_trip(rng):
    values = rng.integers(0, 2**40, size=10**6).tolist()
    stream = b"".join(map(leb128_encode, values))
    pos, back = 0, []
    for _ in values:
        x, pos = leb128_decode(stream, pos)
        back.append(x)
    assert back == values and pos == len(stream)


def test_numba_codec_matches_reference(rng):
    g, _ = random_graph(120, 0.2, 8)
    indptr, indices = g.to_arrays()
    ref = b"".join(encode_neighbor_row(indices[indptr[v]:indptr[v + 1]].tolist())
                   for v in range(g.n_nodes))
    assert g.stream.tobytes() == ref
    lengths, stream, bad = _encode_rows(indptr, indices.astype(np.int64))
    assert bad < 0 and stream.tobytes() == ref


def test_encode_neighbor_row_example():
    assert encode_neighbor_row([]) == b""
    want = leb128_encode(100) + leb128_encode(1) + leb128_encode(2) + leb128_encode(1197)
    assert encode_neighbor_row([100, 101, 103, 1300]) == want
    with pytest.raises(OrderingError):
        encode_neighbor_row([3, 3])


def test_path_graph_build():
    g = build_from_rows([[1], [0, 2], [1]])
    assert g.degrees.tolist() == [1, 2, 1]
    assert g.adjacency() == [[1], [0, 2], [1]]
    assert g.component_sizes.tolist() == [3]
    assert list(neighbors(g, 1)) == [0, 2]


def test_two_triangles():
    g = build_from_rows([[1, 2], [0, 2], [0, 1], [4, 5], [3, 5], [3, 4]])
    assert g.component_sizes.tolist() == [3, 3]
    assert g.component_id.tolist() == [0, 0, 0, 1, 1, 1]


def test_random_graph_decodes_exactly():
    g, a = random_graph(500, 0.05, 7)
    want = [np.flatnonzero(a[i]).tolist() for i in range(500)]
    assert g.adjacency() == want
    assert [list(g.neighbors(v)) for v in range(500)] == want
    assert g.edge_count == int(a.sum())


def test_empty_rows_take_no_bytes():
    g = build_from_rows([[2], [], [0]])
    assert g.offsets.tolist() == [0, 1, 1, 2]


def test_sequential_scan_touches_stream_in_order():
    g, _ = random_graph(200, 0.1, 3)
    last = 0
    for v in range(g.n_nodes):
        cur = g.neighbors(v)
        assert cur.position >= last
        for _ in cur:
            assert cur.position >= last
            last = cur.position
    assert last == g.stream.size


def test_cursor_rejects_trailing_bytes():
    g = build_from_rows([[1, 5], [0], [], [], [], [0]])
    stream = g.stream.copy()
    cur = type(g.neighbors(0))(memoryview(stream), 0, 3, 1)
    assert next(cur) == 1
    with pytest.raises(CorruptStreamError):
        next(cur)


def test_builder_ordering_errors():
    b = CsrBuilder(3)
    with pytest.raises(OrderingError):
        b.append(1, [0])
    b.append(0, [1])
    with pytest.raises(OrderingError):
        b.append(1, [2, 0])
    with pytest.raises(OrderingError):
        b.finalize()


def test_spill_to_file_matches_heap(rng):
    g, a = random_graph(300, 0.1, 11)
    rows = g.adjacency()
    spilled = build_from_rows(rows, spill_threshold=100)
    assert spilled.is_mmapped
    assert np.array_equal(np.asarray(spilled.stream), g.stream)
    assert spilled.adjacency() == rows


def test_threaded_source_in_node_order():
    g, _ = random_graph(400, 0.05, 5)
    rows = [np.array(r, dtype=np.int64) for r in g.adjacency()]
    built = build_from_source(lambda s, e: rows[s:e], 400, batch_size=17, workers=4)
    assert np.array_equal(built.stream, g.stream)
    assert np.array_equal(built.offsets, g.offsets)


# -- persistence ---------------------------------------------------------------

def _town_graph(hilbert=False):
    boundary = Polygon.rectangle(0, 0, 40, 30)
    blds = [Polygon.rectangle(5, 5, 12, 14), Polygon.rectangle(20, 3, 26, 25)]
    return build_graph(boundary, blds, 2.0, 12.0, hilbert=hilbert)


@pytest.mark.parametrize("hilbert", [False, True])
def test_save_load_round_trip_is_byte_exact(tmp_path, hilbert):
    g = _town_graph(hilbert)
    p1, p2 = tmp_path / "a.vga", tmp_path / "b.vga"
    save_vgacsr(g, p1)
    back = load_vgacsr(p1)
    save_vgacsr(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert back.grid == g.grid
    assert np.array_equal(back.cell_index, g.cell_index)
    if hilbert:
        assert np.array_equal(back.hilbert_inverse, g.hilbert_inverse)


def test_graph_without_grid_round_trip(tmp_path):
    g, _ = random_graph(50, 0.2, 1)
    save_vgacsr(g, tmp_path / "g.vga")
    back = load_vgacsr(tmp_path / "g.vga")
    assert back.grid is None and back.adjacency() == g.adjacency()


def test_mmap_load_matches_heap(tmp_path):
    g, _ = random_graph(500, 0.05, 2)
    save_vgacsr(g, tmp_path / "g.vga")
    heap = load_vgacsr(tmp_path / "g.vga")
    mm = load_vgacsr(tmp_path / "g.vga", mmap=True)
    assert mm.is_mmapped and not heap.is_mmapped
    assert all(list(mm.neighbors(v)) == list(heap.neighbors(v)) for v in range(500))


def test_corrupt_files_rejected(tmp_path):
    g, _ = random_graph(30, 0.3, 4)
    path = tmp_path / "g.vga"
    save_vgacsr(g, path)
    data = bytearray(path.read_bytes())

    bad = tmp_path / "bad.vga"
    bad.write_bytes(b"VGACSR02" + data[8:])
    with pytest.raises(VersionError):
        load_vgacsr(bad)
    bad.write_bytes(b"NOTAGRPH" + data[8:])
    with pytest.raises(BadMagicError):
        load_vgacsr(bad)
    flipped = bytearray(data)
    flipped[len(flipped) // 2] ^= 0x01
    bad.write_bytes(bytes(flipped))
    with pytest.raises(ChecksumError):
        load_vgacsr(bad)
    bad.write_bytes(bytes(data[:40]))
    with pytest.raises(TruncatedFileError):
        load_vgacsr(bad)


# -- Hilbert ------------------------------------------------------------------

def test_hilbert_order_one():
    rc = [(0, 0), (1, 0), (1, 1), (0, 1)]
    got = hilbert_index(1, [r for r, _ in rc], [c for _, c in rc])
    assert got.tolist() == [0, 1, 2, 3]


def _d2xy(n, d):
    # reference curve walk (distance to x, y)
    x = y = 0
    s, t = 1, d
    while s < n:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x, y = s - 1 - x, s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def test_hilbert_matches_reference_walk():
    order = 4
    n = 1 << order
    xy = [_d2xy(n, d) for d in range(n * n)]
    got = hilbert_index(order, [y for _, y in xy], [x for x, _ in xy])
    assert got.tolist() == list(range(n * n))


def test_hilbert_order_for():
    assert hilbert_order_for(1, 1) == 0
    assert hilbert_order_for(2, 2) == 1
    assert hilbert_order_for(5, 3) == 3


def test_permute_round_trip(rng):
    g, _ = random_graph(80, 0.1, 9)
    order = rng.permutation(80)
    p = permute(g, order)
    inv = np.argsort(order)
    back = permute(p, inv)
    assert back.adjacency() == g.adjacency()
    assert np.array_equal(back.original_ids(), np.arange(80))


def test_hilbert_size_close_on_open_field():
    g = build_graph(Polygon.rectangle(0, 0, 50, 50), [], 1.0, 10.0)
    h = hilbert_reorder(g)
    assert abs(h.stream.size - g.stream.size) <= 0.05 * g.stream.size
    assert sorted(h.original_ids().tolist()) == list(range(g.n_nodes))
    # same edges after mapping back to original ids
    ids = h.original_ids()
    mapped = [sorted(ids[w] for w in row) for row in h.adjacency()]
    assert all(mapped[k] == g.adjacency()[ids[k]] for k in range(0, g.n_nodes, 97))


def test_compression_on_open_field():
    g = build_graph(Polygon.rectangle(0, 0, 120, 120), [], 3.0, 60.0)
    assert 4 * g.edge_count >= 3 * g.stream.size
