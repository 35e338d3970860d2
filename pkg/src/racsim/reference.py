"""Readable slot-by-slot simulator built from the module operations.

This is the semantic contract for the fused kernels: it composes
step_sources / resolve_slot / apply_slot / decide_* / accumulate_slot
exactly as documented, keeps a *real* per-node mirror of the receiver
state (updated only from the broadcast collision bit and the node's own
ACKs) and asserts on every slot that the mirrors agree with the fusion
center.  Use it at small scale only; the kernels are tested against its
traces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, SlotKind, SlotOutcome, resolve_slot
from .estimator import ReceiverView, apply_slot, error_vector
from .metrics import MetricsAccumulator, MetricsReport
from .policies import (AlohaState, NodeActivation, PolicyConfig, PolicyKind,
                       decide_centralized, decide_decentralized,
                       default_lambda_hat, resolve_policy, update_aloha)
from .process import SourceState, make_streams, step_sources
from .rng import NoiseStream, stream_key, uniform_at, TAG_COIN


@dataclass
class NodeMirror:
    """What one node knows about its own entry of the receiver state."""

    estimate: float = 0.0
    last_delivery_slot: int = 0

    def on_feedback(self, transmitted: bool, delivered: bool,
                    sent_value: float, slot: int) -> None:
        if transmitted and delivered:
            self.estimate = sent_value
            self.last_delivery_slot = slot


@dataclass
class ReferenceResult:
    report: MetricsReport
    psi_trace: np.ndarray       # [slots+1, m], row 0 unused
    age_trace: np.ndarray       # [slots+1, m]
    schedule: np.ndarray        # transmitter id, -1 idle, -2 collision
    outcomes: list[SlotOutcome]


def simulate_reference(policy: PolicyConfig, m: int, slots: int, sigma: float,
                       epsilon: float, seed: int,
                       lambda_hat: float | None = None,
                       gamma_override: int | None = None) -> ReferenceResult:
    policy = resolve_policy(policy, m, sigma, epsilon, calibrated_gamma=gamma_override)
    lam = default_lambda_hat(epsilon) if lambda_hat is None else lambda_hat

    streams = make_streams(seed, m)
    coin_keys = [stream_key(seed, TAG_COIN, i) for i in range(m)]
    sources = SourceState.initial(m, sigma)
    view = ReceiverView.initial(m)
    mirrors = [NodeMirror() for _ in range(m)]
    channel = ChannelConfig(epsilon=epsilon, m=m,
                            noise=NoiseStream(seed, 0) if epsilon > 0 else None)
    aloha = AlohaState(lambda_hat=lam)
    activation = NodeActivation.initial(m)
    acc = MetricsAccumulator(m, sigma)

    psi_trace = np.zeros((slots + 1, m))
    age_trace = np.zeros((slots + 1, m), dtype=np.int64)
    schedule = np.full(slots + 1, -1, dtype=np.int64)
    outcomes: list[SlotOutcome] = []

    c_prev = 0
    prev_outcome: SlotOutcome | None = None
    prev_value: float | None = None
    prev_tx: set[int] = set()
    mirror_sent: dict[int, float] = {}

    for k in range(1, slots + 1):
        # slot boundary: everyone applies last slot's feedback
        if prev_outcome is not None:
            view = apply_slot(view, prev_outcome, prev_value)
            for i in range(m):
                delivered = prev_outcome.kind is SlotKind.DELIVERED and prev_outcome.node_id == i
                mirrors[i].on_feedback(i in prev_tx, delivered,
                                       mirror_sent[i] if i in prev_tx else 0.0, k - 1)
                if delivered:
                    activation.active[i] = False
                    activation.activation_slot[i] = -1
        if policy.kind in (PolicyKind.PSEUDO_BAYES, PolicyKind.SAT, PolicyKind.EBT):
            aloha = update_aloha(aloha, c_prev)

        sources = step_sources(sources, streams)
        errors = error_vector(sources, view)

        # node mirrors must coincide with the fusion center on every slot
        for i in range(m):
            assert mirrors[i].estimate == view.estimates[i], (k, i)
            assert k - mirrors[i].last_delivery_slot == view.ages[i], (k, i)

        transmitters: set[int] = set()
        mirror_sent = {}
        if policy.is_centralized:
            sched = decide_centralized(policy, view, errors)
            if not activation.active[sched]:
                activation.active[sched] = True
                activation.activation_slot[sched] = k
            transmitters.add(sched)
            mirror_sent[sched] = float(sources.values[sched])
        else:
            for i in range(m):
                coin = uniform_at(coin_keys[i], k)
                tx, active = decide_decentralized(
                    policy, float(errors.psi[i]), int(view.ages[i]),
                    bool(activation.active[i]), aloha, coin)
                if active and not activation.active[i]:
                    activation.activation_slot[i] = k
                activation.active[i] = active
                if tx:
                    transmitters.add(i)
                    mirror_sent[i] = float(sources.values[i])

        outcome = resolve_slot(transmitters, channel, slot=k)
        if policy.is_centralized:
            assert outcome.collision_feedback == 0, "centralized policies never collide"
        acc.accumulate_slot(errors, view, outcome, activation)

        psi_trace[k] = errors.psi
        age_trace[k] = view.ages
        if outcome.kind is SlotKind.COLLISION:
            schedule[k] = -2
        elif outcome.kind is SlotKind.IDLE:
            schedule[k] = -1
        else:
            schedule[k] = outcome.node_id
        outcomes.append(outcome)

        prev_outcome = outcome
        prev_tx = transmitters
        prev_value = (float(sources.values[outcome.node_id])
                      if outcome.kind is SlotKind.DELIVERED else None)
        c_prev = outcome.collision_feedback

    return ReferenceResult(report=acc.report(), psi_trace=psi_trace,
                           age_trace=age_trace, schedule=schedule,
                           outcomes=outcomes)
