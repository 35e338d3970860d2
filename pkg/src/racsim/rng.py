"""Counter-based random number streams.

Every random quantity in a simulation run is addressed by
``(seed, stream tag, node id, counter)`` and produced by hashing that
address with two rounds of the splitmix64 finalizer.  This gives:

* reproducibility: the same address always yields the same draw,
* per-node independence: distinct node ids live in unrelated substreams,
* isolation: transmission coin flips and channel erasure draws consume
  their own tagged streams and can never perturb the source trajectories,
* random access: any innovation can be regenerated on demand, so error
  processes can be recomputed exactly from raw noise without storing
  the full noise log.

Standard normals use the exact Box-Muller transform on two 53-bit
uniforms (fixed for the whole build; no tail approximation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1
SM_PHI = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 6.283185307179586

# Stream tags.  One tag per independent consumer of randomness.
TAG_SOURCE = 0   # per-node innovation stream W_i(k)
TAG_COIN = 1     # per-node transmission coin flips
TAG_ERASE = 2    # channel erasure draws (node slot unused, fixed 0)


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer (pure-python reference)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over a uint64 array."""
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def stream_key(seed: int, tag: int, node_id: int) -> int:
    """Derive the 64-bit key of one (tag, node) substream from a master seed.

    Two chained finalizer rounds decorrelate the structured inputs; the
    +1 offsets avoid the splitmix64 fixed point at zero.
    """
    a = mix64((seed + SM_PHI * (tag + 1)) & MASK64)
    return mix64((a + SM_PHI * (node_id + 1)) & MASK64)


def replication_seed(seed: int, replication: int) -> int:
    """Per-replication master seed: ``seed XOR f(replication index)``.

    Adding replications never changes the seeds of earlier ones.
    """
    return (seed ^ mix64(replication + 1)) & MASK64


def uniform_at(key: int, counter: int) -> float:
    """Uniform in [0, 1) at a counter position of a keyed stream."""
    u = mix64((key + ((counter + 1) & MASK64) * SM_PHI) & MASK64)
    return (u >> 11) * _INV53


def normal_at(key: int, index: int) -> float:
    """Standard normal draw number ``index`` of a keyed stream.

    Box-Muller on counters (2*index, 2*index + 1); the first uniform is
    shifted into (0, 1] so the log is always finite.
    """
    a = mix64((key + ((2 * index + 1) & MASK64) * SM_PHI) & MASK64)
    b = mix64((key + ((2 * index + 2) & MASK64) * SM_PHI) & MASK64)
    u1 = ((a >> 11) + 1) * _INV53
    u2 = (b >> 11) * _INV53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def normal_block(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized draws ``index = start .. start+count-1`` of one stream.

    Bit-compatible with repeated :func:`normal_at` calls up to the
    floating-point library used for log/cos (identical in practice).
    """
    idx = np.arange(start, start + count, dtype=np.uint64)
    phi = np.uint64(SM_PHI)
    key_u = np.uint64(key)
    a = mix64_array(key_u + (np.uint64(2) * idx + np.uint64(1)) * phi)
    b = mix64_array(key_u + (np.uint64(2) * idx + np.uint64(2)) * phi)
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
    u2 = (b >> np.uint64(11)).astype(np.float64) * _INV53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@dataclass
class NoiseStream:
    """One node's standard-normal innovation stream.

    Same ``(seed, node_id)`` always reproduces the identical sequence;
    streams of distinct node ids are independent substreams of the
    master seed.  ``cursor`` is the index of the next draw.
    """

    seed: int
    node_id: int
    cursor: int = 0
    _key: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._key = stream_key(self.seed, TAG_SOURCE, self.node_id)

    def peek(self, index: int) -> float:
        """Draw at an absolute index without moving the cursor."""
        return normal_at(self._key, index)

    def next(self) -> float:
        z = normal_at(self._key, self.cursor)
        self.cursor += 1
        return z

    def take(self, count: int) -> np.ndarray:
        """Advance the cursor by ``count`` and return those draws."""
        block = normal_block(self._key, self.cursor, count)
        self.cursor += count
        return block
