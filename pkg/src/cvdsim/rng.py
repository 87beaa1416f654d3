"""Counter-based random streams for reproducible parallel Monte Carlo.

Every stream is keyed by ``(seed, index)`` and draws from Philox4x64-10, the
same generator numpy ships as :class:`numpy.random.Philox`.  The numba
implementation here lets the particle kernels draw inside ``nopython`` code
while staying bit-identical to numpy's reference generator.

Draw layout (fixed; part of the reproducibility contract):

* normal ``j`` comes from block ``j // 4`` evaluated at counter
  ``(j // 4 + 1, 0, 0, 0)``; the block's four words feed two Box-Muller pairs.
* auxiliary uniform ``j`` is word ``j % 4`` of the block at counter
  ``(j // 4 + 1, 1, 0, 0)``.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

# Domain-separation labels for derive_seed.
CHANNEL = 0
NOISE = 1
PILOT = 2
SYMBOLS = 3
AUX = 4


@nb.njit(inline="always", cache=True)
def _mulhi64(a, b):
    al = a & _MASK32
    ah = a >> _S32
    bl = b & _MASK32
    bh = b >> _S32
    ll = al * bl
    lh = al * bh
    hl = ah * bl
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    return ah * bh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 block function."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0 = _mulhi64(_M0, c0)
        lo0 = _M0 * c0
        hi1 = _mulhi64(_M1, c2)
        lo1 = _M1 * c2
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def _u_open(w):
    # (0, 1]: safe under log
    return ((w >> _S11) + _ONE) * _INV53


@nb.njit(inline="always", cache=True)
def _u_half(w):
    # [0, 1)
    return (w >> _S11) * _INV53


@nb.njit(cache=True)
def normal_block(k0, k1, b, out):
    """Fill ``out[0:4]`` with the four standard normals of block ``b``."""
    w0, w1, w2, w3 = philox4x64(np.uint64(b) + _ONE, _ZERO, _ZERO, _ZERO, k0, k1)
    r = math.sqrt(-2.0 * math.log(_u_open(w0)))
    th = _TWO_PI * _u_half(w1)
    out[0] = r * math.cos(th)
    out[1] = r * math.sin(th)
    r = math.sqrt(-2.0 * math.log(_u_open(w2)))
    th = _TWO_PI * _u_half(w3)
    out[2] = r * math.cos(th)
    out[3] = r * math.sin(th)


@nb.njit(cache=True)
def uniform_block(k0, k1, b, out):
    """Fill ``out[0:4]`` with the four auxiliary uniforms in [0, 1) of block ``b``."""
    w0, w1, w2, w3 = philox4x64(np.uint64(b) + _ONE, _ONE, _ZERO, _ZERO, k0, k1)
    out[0] = _u_half(w0)
    out[1] = _u_half(w1)
    out[2] = _u_half(w2)
    out[3] = _u_half(w3)


@nb.njit(cache=True)
def _normals(k0, k1, start, n):
    out = np.empty(n)
    buf = np.empty(4)
    cached = -1
    for i in range(n):
        j = start + i
        b = j >> 2
        if b != cached:
            normal_block(k0, k1, b, buf)
            cached = b
        out[i] = buf[j & 3]
    return out


@nb.njit(cache=True)
def _uniforms(k0, k1, start, n):
    out = np.empty(n)
    buf = np.empty(4)
    cached = -1
    for i in range(n):
        j = start + i
        b = j >> 2
        if b != cached:
            uniform_block(k0, k1, b, buf)
            cached = b
        out[i] = buf[j & 3]
    return out


@nb.njit(cache=True)
def _raw(k0, k1, start, n):
    out = np.empty(n, np.uint64)
    for i in range(n):
        j = start + i
        w = philox4x64(np.uint64(j >> 2) + _ONE, _ZERO, _ZERO, _ZERO, k0, k1)
        out[i] = w[j & 3]
    return out


def _as_u64(value: int, name: str) -> np.uint64:
    value = int(value)
    if not 0 <= value < 2**64:
        raise ValueError(f"{name} must fit in an unsigned 64-bit integer, got {value}")
    return np.uint64(value)


class RngStream:
    """One independent random stream identified by ``(seed, index)``.

    The stream keeps two counters, one for normals and one for auxiliary
    uniforms.  The k-th draw of either kind is a pure function of
    ``(seed, index, k)``, so any partitioning of work reproduces the same
    numbers.
    """

    __slots__ = ("seed", "index", "normal_counter", "uniform_counter")

    def __init__(self, seed: int, index: int = 0, normal_counter: int = 0, uniform_counter: int = 0):
        _as_u64(seed, "seed")
        _as_u64(index, "index")
        self.seed = int(seed)
        self.index = int(index)
        self.normal_counter = int(normal_counter)
        self.uniform_counter = int(uniform_counter)

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return np.uint64(self.seed), np.uint64(self.index)

    def normals(self, n: int) -> np.ndarray:
        k0, k1 = self.key
        out = _normals(k0, k1, self.normal_counter, int(n))
        self.normal_counter += int(n)
        return out

    def uniforms(self, n: int) -> np.ndarray:
        k0, k1 = self.key
        out = _uniforms(k0, k1, self.uniform_counter, int(n))
        self.uniform_counter += int(n)
        return out

    def raw(self, n: int, start: int = 0) -> np.ndarray:
        """Raw 64-bit words of the normal lane (for cross-checks against numpy)."""
        k0, k1 = self.key
        return _raw(k0, k1, int(start), int(n))

    def copy(self) -> "RngStream":
        return RngStream(self.seed, self.index, self.normal_counter, self.uniform_counter)

    def __eq__(self, other):
        if not isinstance(other, RngStream):
            return NotImplemented
        return (self.seed, self.index, self.normal_counter, self.uniform_counter) == (
            other.seed, other.index, other.normal_counter, other.uniform_counter)

    def __repr__(self):
        return (f"RngStream(seed={self.seed}, index={self.index}, "
                f"normal_counter={self.normal_counter}, uniform_counter={self.uniform_counter})")


def derive_seed(base_seed: int, *keys: int) -> int:
    """Derive a 64-bit sub-seed from ``base_seed`` and a tuple of integer keys."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(base_seed: int, *keys: int) -> np.random.Generator:
    """A numpy Generator for bulk draws (symbols, noise) keyed like derive_seed."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
