"""Delta-compressed CSR adjacency.

Each row holds strictly increasing neighbour ids: the first one as an
absolute unsigned LEB128 varint, the rest as LEB128 deltas from their
predecessor. Rows are addressed by a ``u64`` byte-offset array and a ``u32``
degree array. Graphs persist in the VGACSR03 format (little-endian)::

    magic "VGACSR03" | u32 flags | u64 N | u64 E | u64 stream_len
    f64 origin_x | f64 origin_y | f64 spacing | u32 rows | u32 cols | u32 cell_index[N]
    u64 offsets[N+1] | u32 degrees[N] | u8 stream[stream_len]
    u32 n_components | u32 component_id[N] | u32 component_size[n_components]
    [u32 hilbert_inverse[N]  if flags & 1]
    u32 crc32 of all preceding bytes

A graph without grid metadata is written with ``rows = cols = 0``.
"""

from __future__ import annotations

import math
import mmap as _mmap
import os
import struct
import tempfile
import zlib
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from numba import njit

from .components import UnionFind, _union
from .errors import (BadMagicError, ChecksumError, CorruptStreamError, GraphFormatError,
                     OrderingError, TruncatedFileError, VersionError)
from .geometry import GridSpec, WorldPoint

MAGIC = b"VGACSR03"
FLAG_HILBERT = 1
DEFAULT_SPILL_BYTES = 4 << 30
DEFAULT_BATCH = 10_000
MAX_VARINT_BYTES = 10
MAX_HILBERT_ORDER = 31

_HEADER = struct.Struct("<8sIQQQ")
_GRID = struct.Struct("<dddII")


# -- LEB128 ------------------------------------------------------------------

def leb128_encode(value: int) -> bytes:
    if value < 0 or value >= 1 << 64:
        raise ValueError(f"value {value} outside unsigned 64-bit range")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def leb128_decode(buf, pos: int = 0, end: int | None = None) -> tuple[int, int]:
    """Decode one varint from ``buf[pos:end]``; returns ``(value, next_pos)``."""
    end = len(buf) if end is None else end
    result = 0
    shift = 0
    for i in range(MAX_VARINT_BYTES):
        if pos >= end:
            raise CorruptStreamError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
    raise CorruptStreamError(f"varint longer than {MAX_VARINT_BYTES} bytes")


def encode_neighbor_row(sorted_ids: Sequence[int]) -> bytes:
    out = bytearray()
    prev = -1
    for k, v in enumerate(sorted_ids):
        v = int(v)
        if v <= prev:
            raise OrderingError(f"neighbour ids not strictly increasing at position {k}")
        out += leb128_encode(v if k == 0 else v - prev)
        prev = v
    return bytes(out)


class NeighborCursor:
    """Lazy decoder over one node's byte range."""

    __slots__ = ("_buf", "position", "end", "previous", "remaining")

    def __init__(self, buf, start: int, end: int, degree: int):
        self._buf = buf
        self.position = start
        self.end = end
        self.previous = -1
        self.remaining = degree

    def __iter__(self) -> "NeighborCursor":
        return self

    def __next__(self) -> int:
        if self.remaining == 0:
            if self.position != self.end:
                raise CorruptStreamError("row has trailing bytes")
            raise StopIteration
        delta, self.position = leb128_decode(self._buf, self.position, self.end)
        value = delta if self.previous < 0 else self.previous + delta
        if self.previous >= 0 and delta == 0:
            raise CorruptStreamError("zero delta in neighbour row")
        self.previous = value
        self.remaining -= 1
        return value


# -- numba kernels -----------------------------------------------------------

@njit(cache=True, nogil=True)
def _varint_len(x):
    n = 1
    while x >= 128:
        x >>= 7
        n += 1
    return n


@njit(cache=True, nogil=True)
def _encode_rows(indptr, indices):
    """Encode a CSR block. Returns (row byte lengths, stream, bad_row or -1)."""
    n = indptr.size - 1
    lengths = np.zeros(n, dtype=np.int64)
    for v in range(n):
        prev = -1
        total = 0
        for e in range(indptr[v], indptr[v + 1]):
            x = np.int64(indices[e])
            if x <= prev:
                return lengths, np.empty(0, dtype=np.uint8), v
            total += _varint_len(x if prev < 0 else x - prev)
            prev = x
        lengths[v] = total
    stream = np.empty(lengths.sum(), dtype=np.uint8)
    pos = 0
    for v in range(n):
        prev = -1
        for e in range(indptr[v], indptr[v + 1]):
            x = np.int64(indices[e])
            d = x if prev < 0 else x - prev
            prev = x
            while d >= 128:
                stream[pos] = (d & 0x7F) | 0x80
                d >>= 7
                pos += 1
            stream[pos] = d
            pos += 1
    return lengths, stream, -1


@njit(cache=True, nogil=True)
def _decode_all(offsets, degrees, stream, n_nodes):
    """Full decode to (indptr, indices); status is -1 or the first corrupt row."""
    n = degrees.size
    indptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        indptr[v + 1] = indptr[v] + degrees[v]
    indices = np.empty(indptr[n], dtype=np.int32)
    for v in range(n):
        pos = np.int64(offsets[v])
        end = np.int64(offsets[v + 1])
        prev = np.int64(-1)
        for e in range(indptr[v], indptr[v + 1]):
            val = np.int64(0)
            shift = 0
            ok = False
            for _ in range(10):
                if pos >= end:
                    break
                b = np.int64(stream[pos])
                pos += 1
                val |= (b & 0x7F) << shift
                if b < 128:
                    ok = True
                    break
                shift += 7
            if not ok:
                return indptr, indices, v
            if prev >= 0:
                if val == 0:
                    return indptr, indices, v
                val += prev
            if val >= n_nodes:
                return indptr, indices, v
            indices[e] = val
            prev = val
        if pos != end:
            return indptr, indices, v
    return indptr, indices, -1


@njit(cache=True, nogil=True)
def _union_block(parent, rank, base, indptr, indices):
    for v in range(indptr.size - 1):
        for e in range(indptr[v], indptr[v + 1]):
            _union(parent, rank, base + v, np.int64(indices[e]))


# -- container ---------------------------------------------------------------

@dataclass(eq=False)
class CompressedCsr:
    offsets: np.ndarray  # uint64, N + 1
    degrees: np.ndarray  # uint32, N
    stream: np.ndarray  # uint8, heap or memory-mapped
    component_id: np.ndarray  # uint32, N
    component_sizes: np.ndarray  # uint32, n_components
    grid: GridSpec | None = None
    cell_index: np.ndarray | None = None  # uint32, N
    hilbert_inverse: np.ndarray | None = None  # uint32, N: original id of each node
    _keepalive: list = field(default_factory=list, repr=False)
    _decoded: tuple | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return int(self.degrees.size)

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum(dtype=np.uint64))

    @property
    def is_mmapped(self) -> bool:
        base = self.stream
        while base is not None:
            if isinstance(base, (_mmap.mmap, np.memmap)):
                return True
            base = base.obj if isinstance(base, memoryview) else getattr(base, "base", None)
        return False

    def original_ids(self) -> np.ndarray:
        """Original (pre-reordering) id of each node."""
        if self.hilbert_inverse is None:
            return np.arange(self.n_nodes, dtype=np.int64)
        return self.hilbert_inverse.astype(np.int64)

    def node_sizes(self) -> np.ndarray:
        """Exact component size of every node's component."""
        return self.component_sizes[self.component_id].astype(np.int64)

    def neighbors(self, v: int) -> NeighborCursor:
        if not 0 <= v < self.n_nodes:
            raise IndexError(f"node {v} out of range")
        return NeighborCursor(memoryview(self.stream), int(self.offsets[v]),
                              int(self.offsets[v + 1]), int(self.degrees[v]))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Decoded ``(indptr int64, indices int32)``; cached after first call."""
        if self._decoded is None:
            indptr, indices, bad = _decode_all(self.offsets, self.degrees, self.stream,
                                               self.n_nodes)
            if bad >= 0:
                raise CorruptStreamError(f"corrupt neighbour row {bad}")
            self._decoded = (indptr, indices)
        return self._decoded

    def adjacency(self) -> list[list[int]]:
        indptr, indices = self.to_arrays()
        return [indices[indptr[v]:indptr[v + 1]].tolist() for v in range(self.n_nodes)]

    def node_xy(self) -> tuple[np.ndarray, np.ndarray]:
        if self.grid is None or self.cell_index is None:
            nan = np.full(self.n_nodes, np.nan)
            return nan, nan.copy()
        return self.grid.cell_centres(self.cell_index)


def neighbors(csr: CompressedCsr, v: int) -> NeighborCursor:
    return csr.neighbors(v)


# -- construction --------------------------------------------------------------

class CsrBuilder:
    """Ordered appender: rows must arrive for nodes 0, 1, ..., N-1 in turn.

    Stream bytes stay on the heap until ``spill_threshold`` is exceeded; from
    then on they go to an anonymous temporary file that is memory-mapped by
    :meth:`finalize`.
    """

    def __init__(self, n_nodes: int, spill_threshold: int = DEFAULT_SPILL_BYTES):
        self.n_nodes = n_nodes
        self.spill_threshold = spill_threshold
        self.next_node = 0
        self._uf = UnionFind(n_nodes)
        self._lengths = np.zeros(n_nodes, dtype=np.uint64)
        self._degrees = np.zeros(n_nodes, dtype=np.uint32)
        self._chunks: list[np.ndarray] = []
        self._nbytes = 0
        self._file = None

    @property
    def spilled(self) -> bool:
        return self._file is not None

    def append_block(self, start: int, rows: Sequence[np.ndarray]) -> None:
        if start != self.next_node:
            raise OrderingError(f"expected rows starting at node {self.next_node}, got {start}")
        if start + len(rows) > self.n_nodes:
            raise OrderingError("more rows than nodes")
        counts = np.fromiter((len(r) for r in rows), dtype=np.int64, count=len(rows))
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = (np.concatenate(rows).astype(np.int64, copy=False) if indptr[-1]
                   else np.zeros(0, dtype=np.int64))
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_nodes):
            raise OrderingError("neighbour id out of range")
        lengths, stream, bad = _encode_rows(indptr, indices)
        if bad >= 0:
            raise OrderingError(f"row of node {start + bad} is not strictly increasing")
        _union_block(self._uf.parent, self._uf.rank, start, indptr, indices)
        self._lengths[start:start + len(rows)] = lengths
        self._degrees[start:start + len(rows)] = counts
        self._write(stream)
        self.next_node += len(rows)

    def append(self, v: int, row: Sequence[int]) -> None:
        self.append_block(v, [np.asarray(row, dtype=np.int64)])

    def _write(self, data: np.ndarray) -> None:
        if not data.size:
            return
        self._nbytes += data.size
        if self._file is None and self._nbytes > self.spill_threshold:
            self._file = tempfile.TemporaryFile()
            for chunk in self._chunks:
                self._file.write(chunk.tobytes())
            self._chunks = []
        if self._file is not None:
            self._file.write(data.tobytes())
        else:
            self._chunks.append(data)

    def finalize(self, grid: GridSpec | None = None,
                 cell_index: np.ndarray | None = None) -> CompressedCsr:
        if self.next_node != self.n_nodes:
            raise OrderingError(f"only {self.next_node} of {self.n_nodes} rows appended")
        offsets = np.zeros(self.n_nodes + 1, dtype=np.uint64)
        np.cumsum(self._lengths, out=offsets[1:])
        keep = []
        if self._file is not None:
            self._file.flush()
            mm = _mmap.mmap(self._file.fileno(), 0, access=_mmap.ACCESS_READ)
            stream = np.frombuffer(mm, dtype=np.uint8)
            keep = [self._file, mm]
        elif self._chunks:
            stream = np.concatenate(self._chunks)
        else:
            stream = np.zeros(0, dtype=np.uint8)
        comp, sizes = self._uf.finalize()
        if cell_index is not None:
            cell_index = np.asarray(cell_index, dtype=np.uint32)
        return CompressedCsr(offsets, self._degrees, stream, comp, sizes, grid=grid,
                             cell_index=cell_index, _keepalive=keep)


def build_from_rows(rows: Iterable[Sequence[int]], n_nodes: int | None = None, *,
                    grid: GridSpec | None = None, cell_index: np.ndarray | None = None,
                    spill_threshold: int = DEFAULT_SPILL_BYTES) -> CompressedCsr:
    rows = [np.asarray(r, dtype=np.int64) for r in rows]
    builder = CsrBuilder(len(rows) if n_nodes is None else n_nodes, spill_threshold)
    builder.append_block(0, rows)
    return builder.finalize(grid, cell_index)


def build_from_source(produce: Callable[[int, int], Sequence[np.ndarray]], n_nodes: int, *,
                      batch_size: int = DEFAULT_BATCH, workers: int = 1,
                      grid: GridSpec | None = None, cell_index: np.ndarray | None = None,
                      spill_threshold: int = DEFAULT_SPILL_BYTES) -> CompressedCsr:
    """Build from a batch producer ``produce(start, stop) -> rows``.

    Batches may be produced concurrently by ``workers`` threads; they are
    appended strictly in node order.
    """
    builder = CsrBuilder(n_nodes, spill_threshold)
    ranges = [(s, min(s + batch_size, n_nodes)) for s in range(0, n_nodes, batch_size)]

    def run(rng):
        rows = produce(*rng)
        if len(rows) != rng[1] - rng[0]:
            raise OrderingError(f"producer returned {len(rows)} rows for batch {rng}")
        return rows

    if workers <= 1:
        for rng in ranges:
            builder.append_block(rng[0], run(rng))
    else:
        with ThreadPoolExecutor(workers) as pool:
            pending: deque = deque()
            it = iter(ranges)
            for rng in it:
                pending.append((rng, pool.submit(run, rng)))
                if len(pending) >= 2 * workers:
                    break
            while pending:
                rng, fut = pending.popleft()
                builder.append_block(rng[0], fut.result())
                nxt = next(it, None)
                if nxt is not None:
                    pending.append((nxt, pool.submit(run, nxt)))
    return builder.finalize(grid, cell_index)


# -- persistence ---------------------------------------------------------------

def save_vgacsr(csr: CompressedCsr, path: str | Path) -> None:
    n = csr.n_nodes
    flags = FLAG_HILBERT if csr.hilbert_inverse is not None else 0
    crc = 0

    with open(path, "wb") as fh:
        def put(data) -> None:
            nonlocal crc
            buf = memoryview(data).cast("B") if not isinstance(data, bytes) else data
            crc = zlib.crc32(buf, crc)
            fh.write(buf)

        put(_HEADER.pack(MAGIC, flags, n, csr.edge_count, csr.stream.size))
        if csr.grid is not None:
            g = csr.grid
            put(_GRID.pack(g.origin.x, g.origin.y, g.spacing, g.rows, g.cols))
            cells = csr.cell_index if csr.cell_index is not None else np.arange(n)
        else:
            put(_GRID.pack(0.0, 0.0, 0.0, 0, 0))
            cells = np.arange(n)
        put(np.ascontiguousarray(cells, dtype="<u4"))
        put(np.ascontiguousarray(csr.offsets, dtype="<u8"))
        put(np.ascontiguousarray(csr.degrees, dtype="<u4"))
        step = 64 << 20
        for lo in range(0, csr.stream.size, step):
            put(np.ascontiguousarray(csr.stream[lo:lo + step]))
        put(struct.pack("<I", csr.component_sizes.size))
        put(np.ascontiguousarray(csr.component_id, dtype="<u4"))
        put(np.ascontiguousarray(csr.component_sizes, dtype="<u4"))
        if csr.hilbert_inverse is not None:
            put(np.ascontiguousarray(csr.hilbert_inverse, dtype="<u4"))
        fh.write(struct.pack("<I", crc))


def _crc_of(buf, end: int) -> int:
    crc = 0
    step = 64 << 20
    view = memoryview(buf)
    for lo in range(0, end, step):
        crc = zlib.crc32(view[lo:min(end, lo + step)], crc)
    return crc


def load_vgacsr(path: str | Path, mmap: bool = False, verify: bool = True) -> CompressedCsr:
    """Read a VGACSR03 file; with ``mmap=True`` the stream stays file-backed."""
    size = os.path.getsize(path)
    if size < 8:
        raise TruncatedFileError(f"{path}: file too short ({size} bytes)")
    with open(path, "rb") as fh:
        if mmap:
            buf: Any = _mmap.mmap(fh.fileno(), 0, access=_mmap.ACCESS_READ)
        else:
            buf = fh.read()
    magic = bytes(buf[:8])
    if magic != MAGIC:
        if magic.startswith(MAGIC[:6]):
            raise VersionError(f"{path}: unsupported format version {magic!r}")
        raise BadMagicError(f"{path}: not a VGACSR file (magic {magic!r})")
    if size < _HEADER.size + _GRID.size + 4:
        raise TruncatedFileError(f"{path}: truncated header")
    _, flags, n, n_edges, stream_len = _HEADER.unpack_from(buf, 0)
    pos = _HEADER.size
    ox, oy, spacing, rows, cols = _GRID.unpack_from(buf, pos)
    pos += _GRID.size

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal pos
        nbytes = np.dtype(dtype).itemsize * count
        if pos + nbytes > size - 4:
            raise TruncatedFileError(f"{path}: truncated at byte {pos}")
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
        pos += nbytes
        return arr

    cells = take("<u4", n).astype(np.uint32)
    offsets = take("<u8", n + 1).astype(np.uint64)
    degrees = take("<u4", n).astype(np.uint32)
    stream = take("u1", stream_len)
    if not mmap:
        stream = stream.copy()
    (n_comp,) = struct.unpack_from("<I", take("u1", 4))
    comp = take("<u4", n).astype(np.uint32)
    sizes = take("<u4", n_comp).astype(np.uint32)
    hilbert = take("<u4", n).astype(np.uint32) if flags & FLAG_HILBERT else None
    if pos + 4 != size:
        raise TruncatedFileError(f"{path}: {size - pos - 4} unexpected trailing bytes")
    if verify:
        (stored,) = struct.unpack_from("<I", buf, pos)
        if _crc_of(buf, pos) != stored:
            raise ChecksumError(f"{path}: CRC32 mismatch")
    if int(offsets[-1]) != stream_len or int(degrees.sum(dtype=np.uint64)) != n_edges:
        raise GraphFormatError(f"{path}: header counts disagree with arrays")
    grid = None
    if rows and cols:
        grid = GridSpec(WorldPoint(ox, oy), spacing, rows, cols)
    keep = [buf] if mmap else []
    return CompressedCsr(offsets, degrees, stream, comp, sizes, grid=grid,
                         cell_index=cells if grid is not None else None,
                         hilbert_inverse=hilbert, _keepalive=keep)


# -- Hilbert reordering ------------------------------------------------------------

def hilbert_order_for(rows: int, cols: int) -> int:
    side = max(rows, cols)
    return 0 if side <= 1 else math.ceil(math.log2(side))


def hilbert_index(order: int, row, col) -> np.ndarray:
    """Distance along the Hilbert curve of side ``2**order`` (x = col, y = row).

    Order 1 visits (row, col) = (0,0), (1,0), (1,1), (0,1).
    """
    if order > MAX_HILBERT_ORDER:
        raise ValueError(f"Hilbert order {order} exceeds supported maximum {MAX_HILBERT_ORDER}")
    n = np.uint64(1) << np.uint64(order)
    x = np.array(col, dtype=np.uint64, copy=True)
    y = np.array(row, dtype=np.uint64, copy=True)
    d = np.zeros_like(x)
    s = n >> np.uint64(1)
    one = np.uint64(1)
    while s > 0:
        rx = ((x & s) > 0).astype(np.uint64)
        ry = ((y & s) > 0).astype(np.uint64)
        d += s * s * ((np.uint64(3) * rx) ^ ry)
        flip = (ry == 0) & (rx == 1)
        x = np.where(flip, n - one - x, x)
        y = np.where(flip, n - one - y, y)
        swap = ry == 0
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        s >>= one
    return d


@njit(cache=True)
def _permute_rows(indptr, indices, order, new_of_old):
    n = order.size
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    for u in range(n):
        v = order[u]
        out_ptr[u + 1] = out_ptr[u] + indptr[v + 1] - indptr[v]
    out = np.empty(out_ptr[n], dtype=np.int64)
    for u in range(n):
        v = order[u]
        k = out_ptr[u]
        for e in range(indptr[v], indptr[v + 1]):
            out[k] = new_of_old[indices[e]]
            k += 1
        out[out_ptr[u]:out_ptr[u + 1]].sort()
    return out_ptr, out


def permute(csr: CompressedCsr, order: np.ndarray) -> CompressedCsr:
    """Renumber so new node ``u`` is old node ``order[u]``; metadata follows the nodes."""
    order = np.asarray(order, dtype=np.int64)
    new_of_old = np.empty_like(order)
    new_of_old[order] = np.arange(order.size)
    indptr, indices = csr.to_arrays()
    out_ptr, out = _permute_rows(indptr, indices, order, new_of_old)
    lengths, stream, bad = _encode_rows(out_ptr, out)
    assert bad < 0
    offsets = np.zeros(order.size + 1, dtype=np.uint64)
    np.cumsum(lengths, out=offsets[1:])
    return CompressedCsr(
        offsets, csr.degrees[order].copy(), stream, csr.component_id[order].copy(),
        csr.component_sizes.copy(), grid=csr.grid,
        cell_index=None if csr.cell_index is None else csr.cell_index[order].copy(),
        hilbert_inverse=csr.original_ids()[order].astype(np.uint32))


def hilbert_reorder(csr: CompressedCsr) -> CompressedCsr:
    """Renumber nodes along the Hilbert curve of their grid cells.

    Component ids are carried over from the input numbering so metric output
    mapped back to original ids is unchanged.
    """
    if csr.grid is None or csr.cell_index is None:
        raise ValueError("Hilbert reordering needs grid metadata")
    order_bits = hilbert_order_for(csr.grid.rows, csr.grid.cols)
    row, col = np.divmod(csr.cell_index.astype(np.int64), csr.grid.cols)
    keys = hilbert_index(order_bits, row, col)
    return permute(csr, np.argsort(keys, kind="stable"))
