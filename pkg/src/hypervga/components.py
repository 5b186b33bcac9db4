"""Incremental connected components: Union-Find with path halving and union by rank."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _find(parent, v):
    while parent[v] != v:
        parent[v] = parent[parent[v]]
        v = parent[v]
    return v


@njit(cache=True, nogil=True)
def _union(parent, rank, u, v):
    ru = _find(parent, u)
    rv = _find(parent, v)
    if ru == rv:
        return False
    if rank[ru] < rank[rv]:
        ru, rv = rv, ru
    parent[rv] = ru
    if rank[ru] == rank[rv]:
        rank[ru] += 1
    return True


@njit(cache=True, nogil=True)
def _union_row(parent, rank, v, neighbours):
    for w in neighbours:
        _union(parent, rank, v, w)


@njit(cache=True, nogil=True)
def _finalize(parent):
    n = parent.size
    comp = np.empty(n, dtype=np.uint32)
    label = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(n, dtype=np.uint32)
    count = 0
    for v in range(n):
        r = _find(parent, v)
        if label[r] < 0:
            label[r] = count
            count += 1
        comp[v] = label[r]
        sizes[label[r]] += 1
    return comp, sizes[:count].copy()


class UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.rank = np.zeros(n, dtype=np.uint8)

    def __len__(self) -> int:
        return self.parent.size

    def find(self, v: int) -> int:
        return int(_find(self.parent, v))

    def union(self, u: int, v: int) -> bool:
        """Merge the sets of ``u`` and ``v``; False if already joined."""
        return bool(_union(self.parent, self.rank, u, v))

    def union_row(self, v: int, neighbours: np.ndarray) -> None:
        _union_row(self.parent, self.rank, v, np.asarray(neighbours, dtype=np.int64))

    def finalize(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense component ids (by first node occurrence) and component sizes."""
        return _finalize(self.parent)
