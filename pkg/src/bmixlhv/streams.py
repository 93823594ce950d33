"""Counter-based random streams: one independent substream per event.

The generator is philox4x64-10 (Salmon et al.'s counter-based design),
implemented directly on numpy uint64 arrays.  The key holds the user seed;
the counter holds (block cursor, 0, event index, 0).  Because every event
owns its own counter lane, any contiguous partition of the event range
across workers reproduces the exact same draws, which is what makes batch
generation byte-identical regardless of worker count.

Each 256-bit block yields two double-precision uniforms (words 0 and 1,
top 53 bits each); the remaining words are discarded for simplicity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EventStream", "philox4x64", "uniform_pair_block"]

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)  # Weyl increments of the key schedule
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ROUNDS = 10

_U53_SHIFT = np.uint64(11)
_U53_SCALE = 2.0**-53

_UINT64_MAX = 2**64 - 1


def _mulhilo(a, b):
    # full 64x64 -> 128 bit product, elementwise, as (hi, lo)
    lo = a * b
    a_hi = a >> _SHIFT32
    a_lo = a & _MASK32
    b_hi = b >> _SHIFT32
    b_lo = b & _MASK32
    t = a_lo * b_lo
    mid1 = a_hi * b_lo
    mid2 = a_lo * b_hi
    carry = (t >> _SHIFT32) + (mid1 & _MASK32) + (mid2 & _MASK32)
    hi = a_hi * b_hi + (mid1 >> _SHIFT32) + (mid2 >> _SHIFT32) + (carry >> _SHIFT32)
    return hi, lo


def philox4x64(key0, key1, c0, c1, c2, c3):
    """Run the ten philox4x64 rounds; returns the four output words.

    All operands are promoted to uint64 arrays (wrapping arithmetic on
    arrays is silent, unlike numpy scalars).  Counter words broadcast
    against each other, so callers can pass a mix of scalars and arrays.
    """
    k0 = np.array(key0, dtype=np.uint64, ndmin=1)
    k1 = np.array(key1, dtype=np.uint64, ndmin=1)
    c0 = np.array(c0, dtype=np.uint64, ndmin=1)
    c1 = np.array(c1, dtype=np.uint64, ndmin=1)
    c2 = np.array(c2, dtype=np.uint64, ndmin=1)
    c3 = np.array(c3, dtype=np.uint64, ndmin=1)
    for _ in range(_ROUNDS):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


def _to_uniform(word):
    # top 53 bits -> [0, 1)
    return (word >> _U53_SHIFT).astype(np.float64) * _U53_SCALE


def uniform_pair_block(seed, event_indices, cursors):
    """One (u_a, u_b) uniform pair per event at the given cursor positions."""
    event_indices = np.asarray(event_indices, dtype=np.uint64)
    cursors = np.asarray(cursors, dtype=np.uint64)
    zero = np.zeros_like(cursors)
    w0, w1, _, _ = philox4x64(seed, 0, cursors, zero, event_indices, zero)
    return _to_uniform(w0), _to_uniform(w1)


@dataclass
class EventStream:
    """Scalar view of one event's substream; `cursor` counts blocks consumed."""

    seed: int
    event_index: int
    cursor: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _UINT64_MAX:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if not 0 <= self.event_index <= _UINT64_MAX:
            raise ValueError(f"event index must fit in 64 bits, got {self.event_index}")

    def next_pair(self) -> tuple[float, float]:
        u_a, u_b = uniform_pair_block(
            self.seed,
            np.asarray([self.event_index], dtype=np.uint64),
            np.asarray([self.cursor], dtype=np.uint64),
        )
        self.cursor += 1
        return float(u_a[0]), float(u_b[0])

    def next_uniform(self) -> float:
        return self.next_pair()[0]
