"""Receiver-side state: last-delivered estimates and ages.

The fusion center holds, per node, the value of the freshest delivered
sample and the age of information since that delivery.  Because each
node observes the broadcast collision bit and its own ACK, it can
mirror this state exactly; the simulator therefore keeps a single copy
(the reference implementation maintains real per-node mirrors and
asserts they agree on every slot).

Timing convention: a packet transmitted in slot k carries X_i(k) and is
received at the end of slot k, so the estimate and age update at the
start of slot k+1 and h_i(k+1) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SlotKind, SlotOutcome
from .process import SourceState


@dataclass
class ReceiverView:
    """Estimates, ages and delivery timestamps at one slot."""

    estimates: np.ndarray           # X̂_i(slot)
    ages: np.ndarray                # h_i(slot) = slot - last_delivery_slot_i
    last_delivery_slot: np.ndarray  # end-of-slot index of the last delivery
    slot: int

    @classmethod
    def initial(cls, m: int) -> "ReceiverView":
        """State at slot 1: virtual deliveries of X_i(0) = 0 at slot 0."""
        return cls(estimates=np.zeros(m),
                   ages=np.ones(m, dtype=np.int64),
                   last_delivery_slot=np.zeros(m, dtype=np.int64),
                   slot=1)


@dataclass
class ErrorVector:
    """Instantaneous absolute estimation errors |X_i - X̂_i|."""

    psi: np.ndarray
    slot: int


def apply_slot(view: ReceiverView, outcome: SlotOutcome,
               delivered_value: float | None = None) -> ReceiverView:
    """Advance the view across one resolved slot.

    A delivery replaces that node's estimate and resets its age to 1 at
    the next slot boundary; idle, collision and erased slots all leave
    estimates unchanged and age everyone by one (the receiver cannot
    tell them apart).
    """
    delivered = outcome.kind is SlotKind.DELIVERED
    if delivered and delivered_value is None:
        raise ValueError("delivered outcome needs the delivered sample value")
    if not delivered and delivered_value is not None:
        raise ValueError("sample value given without a delivery")
    estimates = view.estimates.copy()
    ages = view.ages + 1
    last = view.last_delivery_slot.copy()
    if delivered:
        i = outcome.node_id
        estimates[i] = delivered_value
        last[i] = view.slot
        ages[i] = 1
    return ReceiverView(estimates=estimates, ages=ages,
                        last_delivery_slot=last, slot=view.slot + 1)


def error_vector(sources: SourceState, view: ReceiverView) -> ErrorVector:
    """psi_i = |X_i - X̂_i| for all nodes, at a common slot."""
    if sources.slot != view.slot:
        raise ValueError(f"slot mismatch: sources at {sources.slot}, view at {view.slot}")
    return ErrorVector(psi=np.abs(sources.values - view.estimates), slot=view.slot)
