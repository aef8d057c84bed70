"""Counter-based random number streams.

Every random decision in the sampler is drawn from a splitmix64 stream whose
initial state is a pure function of (seed, sweep, mode, row).  Streams for
different rows are independent, so rows can be updated on any number of
threads in any order and still produce bit-identical results.

This module is the pure-Python reference; :mod:`booltensor.kernels` carries
the jitted twin used inside the sweep kernel.  ``tests/test_rng.py`` asserts
the two agree draw-for-draw.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# distinct odd multipliers so each key position lands in its own subspace;
# without them (seed + sweep) collides along diagonals and chains with
# nearby seeds couple into shifted copies of one trajectory
_POS1 = 0xA24BAED4963EE407
_POS2 = 0x9FB21C651E98DF25
_POS3 = 0xD6E8FEB86659FD93

# Tags for deriving auxiliary seeds (factor init, holdout masks, ...).
# They sit far above any realistic sweep counter so kernel streams and
# derived seeds can never collide.
TAG_INIT = 1 << 40
TAG_HOLDOUT = (1 << 40) + 1
TAG_SCAN = (1 << 40) + 2
TAG_OCCAM = (1 << 40) + 3
TAG_CV = (1 << 40) + 4
TAG_BENCH = (1 << 40) + 5


def mix64(z: int) -> int:
    """splitmix64 finalizer: a bijective 64-bit hash."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_state(seed: int, a: int, b: int, c: int) -> int:
    """Initial stream state for the (a, b, c) substream of ``seed``.

    The sampler uses (sweep, mode, row).
    """
    s = mix64(seed & MASK64)
    s = mix64(s ^ ((a & MASK64) * _POS1 & MASK64))
    s = mix64(s ^ ((b & MASK64) * _POS2 & MASK64))
    s = mix64(s ^ ((c & MASK64) * _POS3 & MASK64))
    return s


def next_uniform(state: int) -> tuple[int, float]:
    """Advance a stream by one draw; returns (new_state, u) with u in [0, 1)."""
    state = (state + GOLDEN) & MASK64
    z = mix64(state)
    return state, (z >> 11) * 2.0**-53


def derive_seed(seed: int, tag: int, index: int = 0) -> int:
    """Deterministic 64-bit sub-seed for auxiliary RNG uses."""
    return stream_state(seed, tag, index, 0)
