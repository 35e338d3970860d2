"""Transmission policies.

Decentralized policies decide from a node's local observables only:
its own process value, its mirror of the receiver state, the broadcast
collision bit and its own ACKs.  Centralized reference schedulers get
the global state and never collide.

* stationary randomized: transmit with a fixed probability p each slot.
* pseudo-Bayesian ALOHA: transmit with the adaptive p_b each slot.
* age threshold (SAT): become active once the age reaches gamma, then
  contend with probability p_b until delivered.
* error threshold (EbT): become active once |X - X̂| reaches beta, then
  contend with probability p_b until delivered.
* max-age (MW): schedule the node with the largest age.
* max-error greedy: schedule the node with the largest estimation error.

Active nodes stay active until their own delivery; an erased
transmission leaves the sender active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .estimator import ErrorVector, ReceiverView

E_INV = 1.0 / math.e
COLLISION_BUMP = 1.0 / (math.e - 2.0)


class PolicyKind(Enum):
    STATIONARY = "stationary"
    PSEUDO_BAYES = "pseudo_bayes"
    SAT = "sat"
    EBT = "ebt"
    MW = "mw"
    GREEDY = "greedy"


CENTRALIZED = (PolicyKind.MW, PolicyKind.GREEDY)
DECENTRALIZED = (PolicyKind.STATIONARY, PolicyKind.PSEUDO_BAYES,
                 PolicyKind.SAT, PolicyKind.EBT)


@dataclass(frozen=True)
class PolicyConfig:
    """One policy choice plus its parameter.

    ``beta`` (EbT) and ``gamma`` (SAT) default to the calibrated values
    when left unset; ``p`` (stationary) defaults to 1/M.
    """

    kind: PolicyKind
    beta: float | None = None
    gamma: int | None = None
    p: float | None = None

    def __post_init__(self) -> None:
        if self.beta is not None and self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.gamma is not None and self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.p is not None and not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")

    @property
    def is_centralized(self) -> bool:
        return self.kind in CENTRALIZED

    def label(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class AlohaState:
    """Rivest backlog estimator driving the transmit probability.

    On a collision the backlog estimate grows by the assumed arrival
    rate plus 1/(e-2); otherwise one departure is assumed and the
    arrival estimate is added.  The transmit probability is derived,
    min(1, 1/N̂), so the coupling invariant always holds.  Initial
    point: N̂ = 0, p_b = 1.
    """

    n_hat: float = 0.0
    lambda_hat: float = E_INV
    p_b: float = field(init=False)

    def __post_init__(self) -> None:
        if self.n_hat < 0:
            raise ValueError("backlog estimate must be >= 0")
        object.__setattr__(self, "p_b",
                           1.0 if self.n_hat < 1.0 else 1.0 / self.n_hat)


def update_aloha(state: AlohaState, c_prev: int) -> AlohaState:
    """Advance the backlog estimate across one observed feedback bit."""
    if c_prev not in (0, 1):
        raise ValueError("collision feedback is a bit")
    if c_prev == 1:
        n_hat = state.n_hat + state.lambda_hat + COLLISION_BUMP
    else:
        n_hat = state.lambda_hat + max(state.n_hat - 1.0, 0.0)
    return replace(state, n_hat=n_hat)


@dataclass
class NodeActivation:
    """Per-node active flags; a node deactivates only on its own delivery."""

    active: np.ndarray
    activation_slot: np.ndarray  # -1 while inactive

    @classmethod
    def initial(cls, m: int) -> "NodeActivation":
        return cls(active=np.zeros(m, dtype=bool),
                   activation_slot=np.full(m, -1, dtype=np.int64))


def decide_decentralized(cfg: PolicyConfig, psi: float, age: int,
                         already_active: bool, aloha: AlohaState,
                         coin: float) -> tuple[bool, bool]:
    """One node's decision for one slot.

    Returns ``(transmit, active)`` where ``active`` is the node's state
    after the slot's threshold check.  ``coin`` is the node's uniform
    draw for this slot from its private decision stream.
    """
    if cfg.is_centralized:
        raise ValueError(f"{cfg.kind.value} is centralized")
    if cfg.kind is PolicyKind.STATIONARY:
        if cfg.p is None:
            raise ValueError("stationary policy needs p")
        return coin < cfg.p, True
    if cfg.kind is PolicyKind.PSEUDO_BAYES:
        return coin < aloha.p_b, True
    if cfg.kind is PolicyKind.SAT:
        if cfg.gamma is None:
            raise ValueError("age-threshold policy needs gamma")
        active = already_active or age >= cfg.gamma
    else:  # EBT
        if cfg.beta is None:
            raise ValueError("error-threshold policy needs beta")
        active = already_active or psi >= cfg.beta
    return (active and coin < aloha.p_b), active


def decide_centralized(cfg: PolicyConfig, view: ReceiverView,
                       errors: ErrorVector) -> int:
    """Scheduled node id; ties break toward the lowest index."""
    if not cfg.is_centralized:
        raise ValueError(f"{cfg.kind.value} is decentralized")
    if cfg.kind is PolicyKind.MW:
        return int(np.argmax(view.ages))
    return int(np.argmax(errors.psi))


def default_threshold(kind: PolicyKind, m: int, sigma: float,
                      epsilon: float = 0.0) -> float:
    """Closed-form default threshold for the threshold policies.

    Error threshold: sigma * sqrt(e * M / (1 - epsilon)), the
    approximate optimum; it reduces to sigma * sqrt(e * M) on the
    reliable channel.  Age threshold: the matching age scale
    e * M / (1 - epsilon), rounded; a pilot calibration sweep
    (harness.calibrate_sat) refines it.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    if kind is PolicyKind.EBT:
        return sigma * math.sqrt(math.e * m / (1.0 - epsilon))
    if kind is PolicyKind.SAT:
        return float(round(math.e * m / (1.0 - epsilon)))
    raise ValueError(f"no default threshold for {kind.value}")


def default_lambda_hat(epsilon: float = 0.0) -> float:
    """Constant arrival-rate estimate fed to the backlog update.

    1/e on the reliable channel, scaled by the delivery probability
    (1 - epsilon) so the estimator stays consistent with the reduced
    throughput when erasures are on.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    return E_INV * (1.0 - epsilon)


def resolve_policy(cfg: PolicyConfig, m: int, sigma: float,
                   epsilon: float = 0.0,
                   calibrated_gamma: int | None = None) -> PolicyConfig:
    """Fill unset policy parameters with their defaults for a given run."""
    if cfg.kind is PolicyKind.STATIONARY and cfg.p is None:
        return replace(cfg, p=1.0 / m)
    if cfg.kind is PolicyKind.EBT and cfg.beta is None:
        return replace(cfg, beta=default_threshold(PolicyKind.EBT, m, sigma, epsilon))
    if cfg.kind is PolicyKind.SAT and cfg.gamma is None:
        gamma = calibrated_gamma
        if gamma is None:
            gamma = int(default_threshold(PolicyKind.SAT, m, sigma, epsilon))
        return replace(cfg, gamma=gamma)
    return cfg
