"""Counter-based random streams.

Every random number used by the simulators is a pure function of
``(seed, stream id, block index)`` through the Philox4x32-10 bijection, so
results never depend on how work is split across threads.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
MASK32 = 0xFFFFFFFF
TWO_M53 = 1.0 / 9007199254740992.0


def derive_seed(seed: int, *labels) -> int:
    """Hash a base seed and any labels into a fresh 64-bit key."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(seed) & 0xFFFFFFFFFFFFFFFF))
    for lab in labels:
        h.update(b"\x00")
        h.update(repr(lab).encode())
    return int.from_bytes(h.digest(), "little")


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorised Philox4x32-10. Counter words may be arrays; returns 4 uint64 arrays of 32-bit words."""
    c0 = np.asarray(c0, dtype=np.uint64) & MASK32
    c1 = np.asarray(c1, dtype=np.uint64) & MASK32
    c2 = np.asarray(c2, dtype=np.uint64) & MASK32
    c3 = np.asarray(c3, dtype=np.uint64) & MASK32
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = int(k0) & MASK32
    k1 = int(k1) & MASK32
    m0 = np.uint64(PHILOX_M0)
    m1 = np.uint64(PHILOX_M1)
    sh = np.uint64(32)
    lo = np.uint64(MASK32)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        n0 = (p1 >> sh) ^ c1 ^ np.uint64(k0)
        n2 = (p0 >> sh) ^ c3 ^ np.uint64(k1)
        c1 = p1 & lo
        c3 = p0 & lo
        c0, c2 = n0, n2
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


def words_to_uniform(a, b):
    """Map two 32-bit words to a double strictly inside (0, 1)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    hi = (a >> np.uint64(5)).astype(np.float64)
    lo = (b >> np.uint64(6)).astype(np.float64)
    return (hi * 67108864.0 + lo + 0.5) * TWO_M53


def block_uniforms(seed: int, stream, block):
    """Four uniforms per (stream, block): returns array of shape broadcast(stream, block) + (2,) pairs.

    Each Philox block yields two uniforms built from word pairs (0,1) and (2,3).
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    stream = np.asarray(stream, dtype=np.uint64)
    block = np.asarray(block, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32(
        block & np.uint64(MASK32),
        block >> np.uint64(32),
        stream & np.uint64(MASK32),
        stream >> np.uint64(32),
        seed & MASK32,
        seed >> 32,
    )
    return words_to_uniform(w0, w1), words_to_uniform(w2, w3)


def block_normals(seed: int, stream, block):
    """Two standard normals per (stream, block) by the Box-Muller transform."""
    u1, u2 = block_uniforms(seed, stream, block)
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return r * np.cos(ang), r * np.sin(ang)


def normals_per_step(d: int) -> int:
    """Philox blocks used for the Gaussian increment of one step."""
    return (d + 1) // 2


def blocks_per_step(d: int) -> int:
    """Normal blocks plus one block reserved for the bridge-crossing uniform."""
    return normals_per_step(d) + 1


def step_normals(seed: int, stream, step, d: int):
    """Gaussian increments for ``step`` (0-based) of each stream: shape (len(stream), d)."""
    stream = np.atleast_1d(np.asarray(stream, dtype=np.uint64))
    step = np.asarray(step, dtype=np.uint64)
    bps = np.uint64(blocks_per_step(d))
    out = np.empty((stream.shape[0], 2 * normals_per_step(d)))
    for j in range(normals_per_step(d)):
        z0, z1 = block_normals(seed, stream, step * bps + np.uint64(j))
        out[:, 2 * j] = z0
        out[:, 2 * j + 1] = z1
    return out[:, :d]


def step_bridge_uniform(seed: int, stream, step, d: int):
    """Uniform used for the Brownian-bridge crossing test at ``step``."""
    stream = np.atleast_1d(np.asarray(stream, dtype=np.uint64))
    step = np.asarray(step, dtype=np.uint64)
    bps = np.uint64(blocks_per_step(d))
    u, _ = block_uniforms(seed, stream, step * bps + np.uint64(normals_per_step(d)))
    return u


class StreamRNG:
    """Sequential draws from one counter-based stream, for non-path uses (WoS, plan sampling)."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.block = 0

    def uniforms(self, n: int) -> np.ndarray:
        nb = (n + 1) // 2
        blocks = np.arange(self.block, self.block + nb, dtype=np.uint64)
        self.block += nb
        u1, u2 = block_uniforms(self.seed, np.uint64(self.stream), blocks)
        return np.column_stack([u1, u2]).ravel()[:n]

    def normals(self, n: int) -> np.ndarray:
        nb = (n + 1) // 2
        blocks = np.arange(self.block, self.block + nb, dtype=np.uint64)
        self.block += nb
        z1, z2 = block_normals(self.seed, np.uint64(self.stream), blocks)
        return np.column_stack([z1, z2]).ravel()[:n]
