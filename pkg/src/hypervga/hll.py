"""HyperLogLog counters with 4-bit registers packed two per byte.

Register ``j`` of counter ``v`` lives in byte ``v * m/2 + j//2``: the low
nibble for even ``j``, the high nibble for odd ``j``. Elements are hashed
with the SplitMix64 finalizer; the top ``p`` bits pick the register and
``rho`` is one plus the leading-zero count of the remaining bits, saturated
at 15. The finalizer maps 0 to 0, so element 0 always lands in register 0
with the saturated value 15.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

MASK64 = (1 << 64) - 1
MIX_M1 = 0xBF58476D1CE4E5B9
MIX_M2 = 0x94D049BB133111EB
MAX_REGISTER = 15
MIN_PRECISION = 4
MAX_PRECISION = 16


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (xor-shift 30/27/31 with the two standard multipliers)."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * MIX_M1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_M2) & MASK64
    return z ^ (z >> 31)


def hash_element(x: int) -> int:
    return splitmix64(x)


def alpha_for(m: int) -> float:
    if m == 16:
        return 0.673
    if m == 32:
        return 0.697
    if m == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / m)


@dataclass(frozen=True)
class HllParams:
    precision: int = 10

    def __post_init__(self):
        if not MIN_PRECISION <= self.precision <= MAX_PRECISION:
            raise ValueError(f"HLL precision must be in [{MIN_PRECISION}, {MAX_PRECISION}], "
                             f"got {self.precision}")

    @property
    def m(self) -> int:
        return 1 << self.precision

    @property
    def alpha(self) -> float:
        return alpha_for(self.m)

    @property
    def row_bytes(self) -> int:
        return self.m // 2

    @property
    def standard_error(self) -> float:
        return 1.04 / math.sqrt(self.m)


def register_and_rho(h: int, p: int) -> tuple[int, int]:
    idx = h >> (64 - p)
    rest = (h << p) & MASK64
    lz = 64 - rest.bit_length() if rest else 64 - p
    return idx, min(lz + 1, MAX_REGISTER)


# -- numba kernels -------------------------------------------------------------

_U = np.uint64
_LO_NIB = _U(0x0F0F0F0F0F0F0F0F)
_HI_BIT = _U(0x8080808080808080)
_FF = _U(0xFF)


@njit(cache=True, nogil=True)
def _hash(x):
    z = _U(x)
    z = (z ^ (z >> _U(30))) * _U(MIX_M1)
    z = (z ^ (z >> _U(27))) * _U(MIX_M2)
    return z ^ (z >> _U(31))


@njit(cache=True, nogil=True)
def _index_rho(h, p):
    idx = h >> _U(64 - p)
    rest = h << _U(p)
    rho = 1
    top = _U(1) << _U(63)
    while rho < MAX_REGISTER and (rest & top) == _U(0):
        rest = rest << _U(1)
        rho += 1
    return np.int64(idx), rho


@njit(cache=True, nogil=True)
def _insert(packed, counter, element, p):
    idx, rho = _index_rho(_hash(element), p)
    pos = counter * ((1 << p) // 2) + idx // 2
    byte = packed[pos]
    if idx % 2 == 0:
        if (byte & 0x0F) < rho:
            packed[pos] = (byte & 0xF0) | rho
    else:
        if (byte >> 4) < rho:
            packed[pos] = (byte & 0x0F) | (rho << 4)


@njit(cache=True, nogil=True)
def _insert_many(packed, counter, elements, p):
    for e in elements:
        _insert(packed, counter, e, p)


@njit(cache=True, parallel=True)
def _insert_own(packed, elements, p):
    """Counter v receives element ``elements[v]``."""
    for v in prange(elements.size):
        _insert(packed, v, elements[v], p)


@njit(cache=True, nogil=True, inline="always")
def nibble_max(a, b):
    """Nibble-wise maximum of two words holding sixteen 4-bit registers each."""
    ae = a & _LO_NIB
    be = b & _LO_NIB
    ao = (a >> _U(4)) & _LO_NIB
    bo = (b >> _U(4)) & _LO_NIB
    me = ((((ae | _HI_BIT) - be) & _HI_BIT) >> _U(7)) * _FF
    mo = ((((ao | _HI_BIT) - bo) & _HI_BIT) >> _U(7)) * _FF
    even = (ae & me) | (be & ~me)
    odd = (ao & mo) | (bo & ~mo)
    return even | (odd << _U(4))


@njit(cache=True, nogil=True)
def _union_row(dst_words, v, src_words, w, wpr):
    for k in range(wpr):
        dst_words[v * wpr + k] = nibble_max(dst_words[v * wpr + k], src_words[w * wpr + k])


@njit(cache=True, nogil=True)
def _estimate_words(words, start, n_words, m, alpha):
    # sum of 2^(15 - reg) is an exact integer, so the result is order independent
    total = np.int64(0)
    zeros = 0
    for k in range(start, start + n_words):
        w = words[k]
        for _ in range(16):
            r = np.int64(w & _U(0xF))
            w = w >> _U(4)
            total += np.int64(1) << (15 - r)
            if r == 0:
                zeros += 1
    raw = alpha * m * m / (total / 32768.0)
    if raw <= 2.5 * m and zeros > 0:
        return m * math.log(m / zeros)
    return raw


@njit(cache=True, parallel=True)
def _estimate_all(words, n, m, alpha, out):
    wpr = m // 16
    for v in prange(n):
        out[v] = _estimate_words(words, v * wpr, wpr, m, alpha)


# -- public API ------------------------------------------------------------------

class HllRegisterPlane:
    """``n_nodes`` HLL counters in one flat packed byte array."""

    def __init__(self, n_nodes: int, params: HllParams, packed: np.ndarray | None = None):
        self.n_nodes = n_nodes
        self.params = params
        size = n_nodes * params.row_bytes
        if packed is None:
            packed = np.zeros(size, dtype=np.uint8)
        elif packed.dtype != np.uint8 or packed.size != size:
            raise ValueError("packed plane has the wrong size or dtype")
        self.packed = packed

    @property
    def words(self) -> np.ndarray:
        return self.packed.view("<u8")

    def row(self, v: int) -> np.ndarray:
        rb = self.params.row_bytes
        return self.packed[v * rb:(v + 1) * rb]

    def registers(self, v: int) -> np.ndarray:
        """Unpacked register values of counter ``v`` (length m)."""
        row = self.row(v)
        out = np.empty(self.params.m, dtype=np.uint8)
        out[0::2] = row & 0x0F
        out[1::2] = row >> 4
        return out

    def copy(self) -> "HllRegisterPlane":
        return HllRegisterPlane(self.n_nodes, self.params, self.packed.copy())

    def estimate(self, v: int) -> float:
        return estimate(self.registers(v), self.params)

    def estimate_all(self) -> np.ndarray:
        out = np.empty(self.n_nodes, dtype=np.float64)
        _estimate_all(self.words, self.n_nodes, self.params.m, self.params.alpha, out)
        return out


def insert(plane: HllRegisterPlane, counter: int, element: int,
           params: HllParams | None = None) -> None:
    params = params or plane.params
    _insert(plane.packed, counter, element, params.precision)


def insert_many(plane: HllRegisterPlane, counter: int, elements) -> None:
    _insert_many(plane.packed, counter, np.asarray(elements, dtype=np.int64),
                 plane.params.precision)


def union_into(dst: HllRegisterPlane, v: int, src: HllRegisterPlane, w: int,
               params: HllParams | None = None) -> None:
    """``dst[v][j] = max(dst[v][j], src[w][j])`` for every register j."""
    params = params or dst.params
    if src.params != params or dst.params != params:
        raise ValueError("planes use different HLL parameters")
    _union_row(dst.words, v, src.words, w, params.m // 16)


def estimate(registers: np.ndarray, params: HllParams) -> float:
    """Cardinality from unpacked registers (alpha-corrected, linear counting below 2.5m)."""
    regs = np.asarray(registers, dtype=np.int64)
    m = params.m
    total = int(np.sum(np.left_shift(1, 15 - regs)))
    raw = params.alpha * m * m / (total / 32768.0)
    zeros = int(np.count_nonzero(regs == 0))
    if raw <= 2.5 * m and zeros > 0:
        return m * math.log(m / zeros)
    return raw


def sketch(elements, params: HllParams) -> np.ndarray:
    """Unpacked registers of a single counter fed ``elements`` (vectorised)."""
    x = np.asarray(elements, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (x ^ (x >> np.uint64(30))) * np.uint64(MIX_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_M2)
        h = z ^ (z >> np.uint64(31))
    p = params.precision
    idx = (h >> np.uint64(64 - p)).astype(np.int64)
    rest = h << np.uint64(p)
    lz = np.zeros(rest.shape, dtype=np.int64)
    x = rest.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        top_clear = x < (np.uint64(1) << np.uint64(64 - shift))
        lz[top_clear] += shift
        x[top_clear] <<= np.uint64(shift)
    lz[rest == 0] = 64 - p
    rho = np.minimum(lz + 1, MAX_REGISTER)
    regs = np.zeros(params.m, dtype=np.uint8)
    np.maximum.at(regs, idx, rho.astype(np.uint8))
    return regs


def pack_registers(registers: np.ndarray) -> np.ndarray:
    regs = np.asarray(registers, dtype=np.uint8)
    return (regs[0::2] | (regs[1::2] << 4)).astype(np.uint8)
