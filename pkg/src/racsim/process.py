"""Gauss-Markov source processes.

Each of the M nodes observes an independent random walk
``X_i(k+1) = X_i(k) + sigma * z_i(k)`` started at ``X_i(0) = 0``, with
``z_i(k)`` drawn from the node's own :class:`~racsim.rng.NoiseStream`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import NoiseStream, normal_block, stream_key, TAG_SOURCE


@dataclass
class SourceState:
    """Snapshot of all M walks at one slot."""

    values: np.ndarray  # shape (M,), X_i(slot)
    sigma: float
    slot: int

    @classmethod
    def initial(cls, m: int, sigma: float) -> "SourceState":
        if m < 1:
            raise ValueError("need at least one source")
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        return cls(values=np.zeros(m), sigma=float(sigma), slot=0)


def make_streams(seed: int, m: int) -> list[NoiseStream]:
    """Per-node innovation streams for one replication."""
    return [NoiseStream(seed, i) for i in range(m)]


def step_sources(state: SourceState, streams: list[NoiseStream]) -> SourceState:
    """Advance every walk by one innovation; stream cursors move by one.

    Streams must be positioned at the state's slot.
    """
    if len(streams) != state.values.shape[0]:
        raise ValueError("stream count does not match source count")
    for s in streams:
        if s.cursor != state.slot:
            raise ValueError(f"stream {s.node_id} cursor {s.cursor} != slot {state.slot}")
    z = np.array([s.next() for s in streams])
    return SourceState(values=state.values + state.sigma * z,
                       sigma=state.sigma, slot=state.slot + 1)


class SourceEnsemble:
    """Random-access view of the walks of one replication.

    Innovations are regenerated on demand from the counter-based
    streams, so window sums can be recomputed exactly without keeping a
    noise log in memory.
    """

    def __init__(self, seed: int, m: int, sigma: float, horizon: int | None = None):
        if m < 1:
            raise ValueError("need at least one source")
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        self.seed = seed
        self.m = m
        self.sigma = float(sigma)
        self.horizon = horizon
        self._keys = [stream_key(seed, TAG_SOURCE, i) for i in range(m)]

    def _check_range(self, node_id: int, *slots: int) -> None:
        if not 0 <= node_id < self.m:
            raise IndexError(f"node {node_id} out of range [0, {self.m})")
        for s in slots:
            if s < 0 or (self.horizon is not None and s > self.horizon):
                raise IndexError(f"slot {s} out of range [0, {self.horizon}]")

    def innovations(self, node_id: int, from_slot: int, to_slot: int) -> np.ndarray:
        """sigma * z_i(j) for j in [from_slot, to_slot)."""
        self._check_range(node_id, from_slot, to_slot)
        if to_slot < from_slot:
            raise ValueError("from_slot must not exceed to_slot")
        return self.sigma * normal_block(self._keys[node_id], from_slot, to_slot - from_slot)

    def increment_window_sum(self, node_id: int, from_slot: int, to_slot: int) -> float:
        """Sum of innovations over [from_slot, to_slot), i.e. X(to) - X(from)."""
        if from_slot == to_slot:
            return 0.0
        return float(self.innovations(node_id, from_slot, to_slot).sum())

    def value_at(self, node_id: int, slot: int) -> float:
        """X_i(slot), rebuilt from scratch (X_i(0) = 0)."""
        return self.increment_window_sum(node_id, 0, slot)


def increment_window_sum(seed: int, sigma: float, node_id: int,
                         from_slot: int, to_slot: int) -> float:
    """Convenience wrapper over :class:`SourceEnsemble` for one window."""
    ens = SourceEnsemble(seed, node_id + 1, sigma)
    return ens.increment_window_sum(node_id, from_slot, to_slot)
