"""Counter-based randomness and seed derivation.

Every random quantity in the package is a pure function of a 64-bit seed and
a few integer labels, so sketches can be recomputed (or updated) at any pair
index without replaying a sequential generator.
"""

from __future__ import annotations

import hashlib
import struct

import numba
import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_M53 = 2.0**-53


def derive_seed(seed: int, *labels: int | str) -> int:
    """Hash ``seed`` and a tuple of labels into a fresh 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", seed & MASK64))
    for label in labels:
        if isinstance(label, str):
            raw = label.encode()
            h.update(b"s" + struct.pack("<I", len(raw)) + raw)
        else:
            h.update(b"i" + struct.pack("<q", int(label)))
    return int.from_bytes(h.digest(), "little")


def numpy_rng(seed: int, *labels: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; a bijection on uint64
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def keyed_bits(key, counters) -> np.ndarray:
    """Keyed bijection of uint64 counters (two mixing rounds around the key).

    ``key`` may be a scalar or an array broadcastable against ``counters``.
    """
    k = np.asarray(key, dtype=np.uint64) if not isinstance(key, int) else np.uint64(key & MASK64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(c * _GOLDEN + k) ^ k)


def uniforms(key, counters) -> np.ndarray:
    """Uniforms in the open interval (0, 1), one per counter."""
    bits = keyed_bits(key, counters)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53


def gaussians_reference(key, indices) -> np.ndarray:
    """Standard normals at arbitrary indices of an implicit infinite stream.

    Index ``e`` reads block ``e // 2``; the block's two counters feed one
    Box-Muller transform whose cosine half serves even indices and sine half
    odd ones.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    block2 = (idx >> np.uint64(1)) << np.uint64(1)
    u1 = uniforms(key, block2)
    u2 = uniforms(key, block2 | np.uint64(1))
    radius = np.sqrt(-2.0 * np.log(u1))
    # sin(a) = cos(a - pi/2)
    shift = (idx & np.uint64(1)).astype(np.float64) * (0.5 * np.pi)
    return radius * np.cos(2.0 * np.pi * u2 - shift)


@numba.njit(cache=True)
def _mix64_scalar(x):
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    return x ^ (x >> np.uint64(31))


@numba.vectorize(["float64(uint64, uint64)"], cache=True)
def _gaussian_kernel(k, e):
    b = (e >> np.uint64(1)) << np.uint64(1)
    h1 = _mix64_scalar(_mix64_scalar(b * _GOLDEN + k) ^ k)
    h2 = _mix64_scalar(_mix64_scalar((b | np.uint64(1)) * _GOLDEN + k) ^ k)
    u1 = (np.float64(h1 >> np.uint64(11)) + 0.5) * _TWO_POW_M53
    u2 = (np.float64(h2 >> np.uint64(11)) + 0.5) * _TWO_POW_M53
    r = np.sqrt(-2.0 * np.log(u1))
    if e & np.uint64(1):
        return r * np.sin(2.0 * np.pi * u2)
    return r * np.cos(2.0 * np.pi * u2)


@numba.njit(cache=True)
def _gaussian_grid_kernel(keys, idx, inv_grid):
    out = np.empty((keys.size, idx.size))
    for i in range(keys.size):
        for j in range(idx.size):
            out[i, j] = np.rint(_gaussian_kernel(keys[i], idx[j]) * inv_grid) / inv_grid
    return out


def gaussian_grid_block(keys, indices, grid: float) -> np.ndarray:
    """``out[i, j]``: Gaussian for ``keys[i]`` at ``indices[j]``, rounded to multiples of ``grid``."""
    k = np.ascontiguousarray(keys, dtype=np.uint64).ravel()
    e = np.ascontiguousarray(indices, dtype=np.uint64).ravel()
    return _gaussian_grid_kernel(k, e, 1.0 / grid)


def gaussians(key, indices) -> np.ndarray:
    """Compiled equivalent of :func:`gaussians_reference` (keys broadcast against indices)."""
    k = np.asarray(key & MASK64 if isinstance(key, int) else key, dtype=np.uint64)
    return _gaussian_kernel(k, np.asarray(indices, dtype=np.uint64))
