"""Slotted collision channel with optional erasures.

One packet per slot at most: zero transmitters leave the slot idle, two
or more collide, a single transmitter is delivered unless the erasure
draw kills it.  Erasure applies after collision resolution, at the end
of the slot.  Feedback is the broadcast collision bit plus each
sender's private delivery ACK.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .rng import NoiseStream, stream_key, uniform_at, TAG_ERASE


class SlotKind(Enum):
    IDLE = "idle"
    COLLISION = "collision"
    DELIVERED = "delivered"
    ERASED = "erased"


@dataclass(frozen=True)
class SlotOutcome:
    """Resolution of one channel slot.

    ``collision_feedback`` is the broadcast bit c(k); ``delivery_flags``
    carries d_i(k), of which at most one is set.  Erased slots look like
    idle slots to everyone except the sender, who sees its own d = 0.
    """

    kind: SlotKind
    node_id: int | None
    collision_feedback: int
    delivery_flags: np.ndarray

    def __post_init__(self) -> None:
        c = self.collision_feedback
        d_sum = int(self.delivery_flags.sum())
        if (c == 1) != (self.kind is SlotKind.COLLISION):
            raise ValueError("collision bit must be set iff the slot collided")
        if d_sum not in (0, 1):
            raise ValueError("at most one delivery per slot")
        if (d_sum == 1) != (self.kind is SlotKind.DELIVERED):
            raise ValueError("delivery flag must be set iff the slot delivered")
        if self.kind in (SlotKind.DELIVERED, SlotKind.ERASED):
            if self.node_id is None:
                raise ValueError("delivered/erased outcome needs a node id")
            if self.kind is SlotKind.DELIVERED and self.delivery_flags[self.node_id] != 1:
                raise ValueError("delivery flag must point at the delivered node")


@dataclass
class ChannelConfig:
    """Erasure probability and the channel's private noise stream."""

    epsilon: float = 0.0
    m: int = 1
    noise: NoiseStream | None = None
    _key: int = field(init=False, repr=False, default=0)
    _cursor: int = field(init=False, repr=False, default=0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must be in [0, 1)")
        if self.noise is not None:
            # reuse the stream's keying but on the erasure tag, so channel
            # draws never touch any source substream
            self._key = stream_key(self.noise.seed, TAG_ERASE, 0)

    def erased(self, slot: int) -> bool:
        if self.epsilon == 0.0:
            return False
        if self.noise is None:
            raise ValueError("epsilon > 0 requires a channel noise stream")
        return uniform_at(self._key, slot) < self.epsilon


def resolve_slot(transmitters: set[int] | list[int], cfg: ChannelConfig,
                 slot: int = 0) -> SlotOutcome:
    """Resolve one slot given the set of transmitting node ids."""
    tx = sorted(set(transmitters))
    if any(t < 0 or t >= cfg.m for t in tx):
        raise ValueError("transmitter id out of range")
    flags = np.zeros(cfg.m, dtype=np.int8)
    if len(tx) == 0:
        return SlotOutcome(SlotKind.IDLE, None, 0, flags)
    if len(tx) >= 2:
        return SlotOutcome(SlotKind.COLLISION, None, 1, flags)
    node = tx[0]
    if cfg.erased(slot):
        return SlotOutcome(SlotKind.ERASED, node, 0, flags)
    flags[node] = 1
    return SlotOutcome(SlotKind.DELIVERED, node, 0, flags)
