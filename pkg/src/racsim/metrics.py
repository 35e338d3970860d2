"""Metric accumulation and closed-form validation identities.

Per-slot accumulation feeds two layers of statistics:

* slot averages over the whole horizon: normalized average estimation
  error (sum of squared errors / M^2 / K), normalized average age,
  throughput, active fraction and activation rate;
* per-interval records between consecutive deliveries of one node,
  carrying the silence delay (slots until the threshold crossing), the
  transmission delay (slots spent active), the interval length, the
  squared-error sums split at the crossing, and the error magnitude at
  the crossing.

The record moments validate the closed-form identities: interval length
= silence + transmission - 1, the stopped-walk second-moment identity
E[S_J^2] = sigma^2 E[J], and the two-term error decomposition whose
second term has a closed form in the interval moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SlotKind, SlotOutcome
from .estimator import ErrorVector, ReceiverView
from .policies import NodeActivation


class KahanSum:
    """Compensated summation; billions of same-sign doubles stay exact
    to well below any tolerance used here."""

    __slots__ = ("total", "_c")

    def __init__(self) -> None:
        self.total = 0.0
        self._c = 0.0

    def add(self, x: float) -> None:
        y = x - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t


@dataclass(frozen=True)
class IntervalRecord:
    """One closed inter-delivery interval of one node."""

    node_id: int
    silence_delay: int        # first in-interval slot whose error crossed
    tx_delay: int             # slots spent active, crossing through delivery
    interval_len: int         # slots between consecutive deliveries
    head_sq_sum: float        # sum of squared errors up to the crossing slot
    tail_sq_sum: float        # remainder of the interval's squared errors
    err_at_activation: float  # |error| on the crossing slot

    @property
    def sum_sq_err(self) -> float:
        return self.head_sq_sum + self.tail_sq_sum


class RecordSet:
    """Column store of interval records."""

    def __init__(self, node: np.ndarray, silence: np.ndarray, tx: np.ndarray,
                 interval: np.ndarray, head: np.ndarray, tail: np.ndarray,
                 err_at_act: np.ndarray):
        self.node = node
        self.silence = silence
        self.tx = tx
        self.interval = interval
        self.head = head
        self.tail = tail
        self.err_at_act = err_at_act

    def __len__(self) -> int:
        return len(self.node)

    def __getitem__(self, idx: int) -> IntervalRecord:
        return IntervalRecord(int(self.node[idx]), int(self.silence[idx]),
                              int(self.tx[idx]), int(self.interval[idx]),
                              float(self.head[idx]), float(self.tail[idx]),
                              float(self.err_at_act[idx]))

    @classmethod
    def from_records(cls, records: list[IntervalRecord]) -> "RecordSet":
        return cls(np.array([r.node_id for r in records], dtype=np.int64),
                   np.array([r.silence_delay for r in records], dtype=np.int64),
                   np.array([r.tx_delay for r in records], dtype=np.int64),
                   np.array([r.interval_len for r in records], dtype=np.int64),
                   np.array([r.head_sq_sum for r in records]),
                   np.array([r.tail_sq_sum for r in records]),
                   np.array([r.err_at_activation for r in records]))

    def identity_violations(self) -> int:
        """Count records violating interval = silence - 1 + transmission."""
        return int(np.sum(self.interval != self.silence - 1 + self.tx))


@dataclass
class MetricsReport:
    """Scalar summary of one replication (one CSV row)."""

    naee: float = math.nan
    naaoi: float = math.nan
    throughput: float = math.nan
    alpha_hat: float = math.nan
    activation_rate: float = math.nan
    e_j: float = math.nan
    e_j2: float = math.nan
    e_u: float = math.nan
    e_u2: float = math.nan
    e_i: float = math.nan
    e_sumsq: float = math.nan          # mean head sum, E[sum_{j<=J} psi^2]
    wald_ratio: float = math.nan
    l1: float = math.nan
    l2: float = math.nan
    l2_closed_form: float = math.nan
    # auxiliary, not part of the CSV schema
    e_sj2: float = math.nan            # E[err_at_activation^2]
    naee_closed: float = math.nan      # restriction of naee to closed intervals
    n_records: int = 0
    deliveries: int = 0
    collisions: int = 0
    erasures: int = 0
    idles: int = 0
    newly_active: int = 0
    identity_violations: int = 0
    slots: int = 0


def decompose_naee(records: RecordSet, m: int, sigma: float
                   ) -> tuple[float, float, float]:
    """Split the record-restricted error metric at the threshold crossing.

    Returns (head term, tail term, closed-form tail term).  The two
    empirical terms sum to the record-restricted metric by construction;
    the closed form rebuilds the tail from the interval moments alone:
    [2 E[J](E[U]-1) + E[U^2] - E[U]] / (2 E[I]) * sigma^2 / M.
    """
    if len(records) == 0:
        raise ValueError("no closed interval records")
    mean_i = records.interval.mean()
    l1 = records.head.mean() / (m * mean_i)
    l2 = records.tail.mean() / (m * mean_i)
    mean_j = records.silence.mean()
    mean_u = records.tx.mean()
    mean_u2 = (records.tx.astype(np.float64) ** 2).mean()
    l2_closed = (2.0 * mean_j * (mean_u - 1.0) + mean_u2 - mean_u) \
        / (2.0 * m * mean_i) * sigma * sigma
    return float(l1), float(l2), float(l2_closed)


def check_wald(records: RecordSet, sigma: float, min_records: int = 1000) -> float:
    """E[S_J^2] / (sigma^2 E[J]); 1 for any stopping rule blind to the future."""
    if len(records) < min_records:
        raise ValueError(f"need >= {min_records} records, have {len(records)}")
    return float((records.err_at_act ** 2).mean() / (sigma * sigma * records.silence.mean()))


def check_alpha_fixed_point(report: MetricsReport, m: int) -> tuple[float, float]:
    """Relative residuals of the two active-fraction identities.

    First: measured active fraction against E[U]/E[I] (renewal-reward,
    holds empirically up to open-interval edges).  Second: the
    activation-rate fixed point (1 - alpha) M alpha against the measured
    activation rate (an idealization that assumes transmission delays
    of one slot; reported, not asserted, by the simulator).
    """
    ratio = report.e_u / report.e_i
    r1 = abs(report.alpha_hat - ratio) / ratio if ratio > 0 else math.inf
    fp = (1.0 - report.alpha_hat) * m * report.alpha_hat
    r2 = (abs(fp - report.activation_rate) / report.activation_rate
          if report.activation_rate > 0 else math.inf)
    return r1, r2


def summarize(records: RecordSet, sigma: float, m: int, slots: int,
              naee_sum: float, age_sum: int, deliveries: int, collisions: int,
              erasures: int, idles: int, newly_active: int,
              active_slots: int) -> MetricsReport:
    """Build the scalar report from raw accumulators and closed records."""
    rep = MetricsReport(
        naee=naee_sum / (m * m * slots),
        naaoi=age_sum / (m * m * slots),
        throughput=deliveries / slots,
        alpha_hat=active_slots / (m * slots),
        activation_rate=newly_active / slots,
        n_records=len(records),
        deliveries=deliveries, collisions=collisions, erasures=erasures,
        idles=idles, newly_active=newly_active,
        identity_violations=records.identity_violations(), slots=slots,
    )
    if len(records) > 0:
        rep.e_j = float(records.silence.mean())
        rep.e_j2 = float((records.silence.astype(np.float64) ** 2).mean())
        rep.e_u = float(records.tx.mean())
        rep.e_u2 = float((records.tx.astype(np.float64) ** 2).mean())
        rep.e_i = float(records.interval.mean())
        rep.e_sumsq = float(records.head.mean())
        rep.e_sj2 = float((records.err_at_act ** 2).mean())
        rep.wald_ratio = rep.e_sj2 / (sigma * sigma * rep.e_j) if sigma > 0 else math.nan
        rep.l1, rep.l2, rep.l2_closed_form = decompose_naee(records, m, sigma)
        rep.naee_closed = rep.l1 + rep.l2
    return rep


class MetricsAccumulator:
    """Slot-ordered accumulator used by the reference simulator.

    The production kernels fuse the same bookkeeping into their loops;
    this object is the readable contract they are tested against.
    """

    def __init__(self, m: int, sigma: float):
        self.m = m
        self.sigma = sigma
        self.naee = KahanSum()
        self.age_sum = 0
        self.active_slots = 0
        self.newly_active = 0
        self.deliveries = 0
        self.collisions = 0
        self.erasures = 0
        self.idles = 0
        self.slots = 0
        self.records: list[IntervalRecord] = []
        self._expected_slot = 1
        self._prev_active = np.zeros(m, dtype=bool)
        self._cur_head = np.zeros(m)
        self._cur_tail = np.zeros(m)
        self._cur_silence = np.zeros(m, dtype=np.int64)  # 0 while uncrossed
        self._cur_tx = np.zeros(m, dtype=np.int64)
        self._cur_err_at_act = np.zeros(m)

    def accumulate_slot(self, errors: ErrorVector, view: ReceiverView,
                        outcome: SlotOutcome, activation: NodeActivation) -> None:
        if errors.slot != self._expected_slot:
            raise ValueError(f"slot {errors.slot} out of order, expected {self._expected_slot}")
        self._expected_slot += 1
        self.slots += 1
        psi = errors.psi
        sq = psi * psi
        for x in sq:
            self.naee.add(float(x))
        self.age_sum += int(view.ages.sum())
        act = activation.active
        crossed_now = act & ~self._prev_active
        self.newly_active += int(crossed_now.sum())
        self.active_slots += int(act.sum())
        # silence delay is the age on the crossing slot
        self._cur_silence[crossed_now] = view.ages[crossed_now]
        self._cur_err_at_act[crossed_now] = psi[crossed_now]
        self._cur_tx[act] += 1
        head = (self._cur_silence == 0) | crossed_now
        self._cur_head[head] += sq[head]
        self._cur_tail[~head] += sq[~head]
        if outcome.kind is SlotKind.COLLISION:
            self.collisions += 1
        elif outcome.kind is SlotKind.ERASED:
            self.erasures += 1
        elif outcome.kind is SlotKind.IDLE:
            self.idles += 1
        else:
            self.deliveries += 1
            i = outcome.node_id
            self.records.append(IntervalRecord(
                node_id=i,
                silence_delay=int(self._cur_silence[i]),
                tx_delay=int(self._cur_tx[i]),
                interval_len=int(view.ages[i]),
                head_sq_sum=float(self._cur_head[i]),
                tail_sq_sum=float(self._cur_tail[i]),
                err_at_activation=float(self._cur_err_at_act[i]),
            ))
            self._cur_head[i] = 0.0
            self._cur_tail[i] = 0.0
            self._cur_silence[i] = 0
            self._cur_tx[i] = 0
            self._cur_err_at_act[i] = 0.0
            act = act.copy()
            act[i] = False  # inactive from the next slot on
        self._prev_active = act.copy()

    def report(self) -> MetricsReport:
        recs = RecordSet.from_records(self.records)
        return summarize(recs, self.sigma, self.m, self.slots,
                         self.naee.total, self.age_sum, self.deliveries,
                         self.collisions, self.erasures, self.idles,
                         self.newly_active, self.active_slots)
