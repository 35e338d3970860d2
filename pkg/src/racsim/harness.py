"""Experiment orchestration: single runs, sweeps, calibration, CSV.

A run is fully described by a :class:`SimConfig`; a figure-style
experiment by a :class:`SweepSpec` (one swept axis times a policy list
times replications).  Replication seeds are ``seed XOR f(replication)``
so adding replications never perturbs existing rows.  All outputs are
CSV with a fixed header and 17-significant-digit floats, plus a sidecar
JSON with the config, git revision and wall time; single-threaded runs
are byte-reproducible.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels
from ._kernels import run_slot_loop
from .metrics import MetricsReport, RecordSet, summarize
from .policies import (PolicyConfig, PolicyKind, default_lambda_hat,
                       resolve_policy)
from .oracle import HittingMoments, brownian_hitting_moments, random_walk_hitting_moments
from .rng import replication_seed, stream_key, TAG_COIN, TAG_ERASE, TAG_SOURCE

E = math.e

CSV_COLUMNS = ["policy", "M", "K", "sigma2", "epsilon", "beta_or_gamma",
               "seed", "replication", "naee", "naaoi", "throughput",
               "alpha_hat", "activation_rate", "e_j", "e_j2", "e_u", "e_u2",
               "e_i", "e_sumsq", "wald_ratio", "l1", "l2", "l2_closed_form"]
REFERENCE_COLUMNS = ["ref_sat_e2", "ref_ebt_e6", "ref_mw_half",
                     "ref_ebt_e6_eps", "ref_sat_e2_eps", "ref_floor_088"]

_POLICY_CODE = {PolicyKind.STATIONARY: _kernels.P_STATIONARY,
                PolicyKind.PSEUDO_BAYES: _kernels.P_PSEUDO_BAYES,
                PolicyKind.SAT: _kernels.P_SAT,
                PolicyKind.EBT: _kernels.P_EBT,
                PolicyKind.MW: _kernels.P_MW,
                PolicyKind.GREEDY: _kernels.P_GREEDY}


class ConfigError(ValueError):
    """Invalid configuration; carries a field-specific message."""


@dataclass(frozen=True)
class SimConfig:
    """One simulation setting (per-replication seeds derive from seed)."""

    m: int = 500
    slots: int = 500_000
    sigma2: float = 1.0
    epsilon: float = 0.0
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig(PolicyKind.EBT))
    seed: int = 20240811
    replications: int = 10
    burn_in: int = 0
    output: str | None = None

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.slots < 1:
            raise ConfigError(f"slots must be >= 1, got {self.slots}")
        if not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be > 0, got {self.sigma2}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.burn_in < 0:
            raise ConfigError(f"burn_in must be >= 0, got {self.burn_in}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["policy"] = {"kind": self.policy.kind.value, "beta": self.policy.beta,
                       "gamma": self.policy.gamma, "p": self.policy.p}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        try:
            pol = d.get("policy", {})
            policy = PolicyConfig(kind=PolicyKind(pol.get("kind", "ebt")),
                                  beta=pol.get("beta"), gamma=pol.get("gamma"),
                                  p=pol.get("p"))
            cfg = cls(m=int(d.get("m", 500)), slots=int(d.get("slots", 500_000)),
                      sigma2=float(d.get("sigma2", 1.0)),
                      epsilon=float(d.get("epsilon", 0.0)), policy=policy,
                      seed=int(d.get("seed", 20240811)),
                      replications=int(d.get("replications", 10)),
                      burn_in=int(d.get("burn_in", 0)),
                      output=d.get("output"))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SweepSpec:
    """A swept axis times a policy list, on top of a base config."""

    base: SimConfig
    axis: str                  # one of sigma2 | epsilon | m
    values: tuple
    policies: tuple

    AXES = ("sigma2", "epsilon", "m")

    def validate(self) -> None:
        self.base.validate()
        if self.axis not in self.AXES:
            raise ConfigError(f"axis must be one of {self.AXES}, got {self.axis!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one axis value")
        if len(self.policies) == 0:
            raise ConfigError("sweep needs at least one policy")

    def configs(self):
        """Deterministic enumeration of (policy, value) cells."""
        for policy in self.policies:
            for value in self.values:
                yield dataclasses.replace(self.base, policy=policy,
                                          **{self.axis: value})

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "axis": self.axis,
                "values": list(self.values),
                "policies": [{"kind": p.kind.value, "beta": p.beta,
                              "gamma": p.gamma, "p": p.p} for p in self.policies]}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        base = SimConfig.from_dict(d.get("base", {}))
        pols = tuple(PolicyConfig(kind=PolicyKind(p.get("kind")), beta=p.get("beta"),
                                  gamma=p.get("gamma"), p=p.get("p"))
                     for p in d.get("policies", []))
        spec = cls(base=base, axis=d.get("axis", "sigma2"),
                   values=tuple(d.get("values", [])), policies=pols)
        spec.validate()
        return spec


@dataclass
class RunOutput:
    """Report plus optional raw per-run artifacts."""

    report: MetricsReport
    policy: PolicyConfig
    config: SimConfig
    replication: int
    tx_hash: int
    tx_events: int
    records: RecordSet | None = None
    schedule: np.ndarray | None = None
    psi_trace: np.ndarray | None = None
    age_trace: np.ndarray | None = None


def calibrate_sat(m: int, epsilon: float = 0.0, seed: int = 20240811,
                  pilot_slots: int = 150_000, coarse: int = 9,
                  refine: int = 7) -> int:
    """Pick the age threshold by a coarse-to-fine pilot sweep.

    Minimizes the pilot normalized average age over thresholds in
    [M, 3M] scaled by 1/(1-epsilon), restricted to the stabilized
    regime (pilot activation rate below the channel capacity
    (1-epsilon)/e; the backlog estimator's stability guarantee and the
    whole steady-state analysis presume it).  Pilots run in age-only
    mode with a fixed pilot seed, so the result is deterministic given
    the seed and independent of sigma (age-based policies never read
    the process).
    """
    return _calibrate_sat_cached(int(m), float(epsilon), int(seed),
                                 int(pilot_slots), int(coarse), int(refine))


@lru_cache(maxsize=64)
def _calibrate_sat_cached(m, epsilon, seed, pilot_slots, coarse, refine) -> int:
    scale = 1.0 / (1.0 - epsilon)
    lo, hi = m * scale, 3.0 * m * scale
    pilot_seed = replication_seed(seed, 997)
    capacity = (1.0 - epsilon) / E

    def pilot(gamma: int) -> tuple[float, float]:
        rep = _run_kernel(PolicyConfig(PolicyKind.SAT, gamma=gamma), m,
                          pilot_slots, 1.0, epsilon, pilot_seed,
                          skip_process=True)[0]
        return rep.naaoi, rep.activation_rate

    grid = [int(round(g)) for g in np.linspace(lo, hi, coarse)]
    scores = {g: pilot(g) for g in grid}
    best = _best_gamma(scores, capacity)
    step = (hi - lo) / (coarse - 1)
    fine = np.linspace(max(lo, best - step), min(hi, best + step), refine)
    for g in (int(round(v)) for v in fine):
        if g not in scores:
            scores[g] = pilot(g)
    return _best_gamma(scores, capacity)


def _best_gamma(scores: dict, capacity: float) -> int:
    feasible = [g for g, (_, rate) in scores.items() if rate < capacity]
    pool = feasible if feasible else list(scores)
    return min(pool, key=lambda g: scores[g][0])


def _run_kernel(policy: PolicyConfig, m: int, slots: int, sigma: float,
                epsilon: float, rep_seed: int, skip_process: bool = False,
                burn_in: int = 0, keep_records: bool = False,
                record_schedule: bool = False, record_trace: bool = False):
    """Resolve parameters, invoke the selected kernel, summarize."""
    code = _POLICY_CODE[policy.kind]
    beta = policy.beta if policy.beta is not None else 0.0
    gamma = policy.gamma if policy.gamma is not None else 1
    p_fixed = policy.p if policy.p is not None else 1.0
    lam_hat = default_lambda_hat(epsilon)

    src_keys = np.array([stream_key(rep_seed, TAG_SOURCE, i) for i in range(m)],
                        dtype=np.uint64)
    coin_keys = np.array([stream_key(rep_seed, TAG_COIN, i) for i in range(m)],
                         dtype=np.uint64)
    erase_key = np.uint64(stream_key(rep_seed, TAG_ERASE, 0))

    cap = slots + 1
    rec_node = np.zeros(cap, dtype=np.int64)
    rec_silence = np.zeros(cap, dtype=np.int64)
    rec_tx = np.zeros(cap, dtype=np.int64)
    rec_interval = np.zeros(cap, dtype=np.int64)
    rec_close = np.zeros(cap, dtype=np.int64)
    rec_head = np.zeros(cap)
    rec_tail = np.zeros(cap)
    rec_eact = np.zeros(cap)
    schedule = np.full(cap if record_schedule else 1, -1, dtype=np.int64)
    t_rows = cap if record_trace else 1
    psi_trace = np.zeros((t_rows, m if record_trace else 1))
    age_trace = np.zeros((t_rows, m if record_trace else 1), dtype=np.int64)

    (naee_sum, age_sum, deliveries, collisions, erasures, idles, newly_active,
     active_slots, n_rec, tx_events, tx_hash, violations) = run_slot_loop(
        code, m, slots, sigma, epsilon, float(beta), int(gamma), float(p_fixed),
        lam_hat, src_keys, coin_keys, erase_key, skip_process,
        rec_node, rec_silence, rec_tx, rec_interval, rec_close,
        rec_head, rec_tail, rec_eact, schedule, psi_trace, age_trace)

    keep = slice(0, n_rec)
    if burn_in > 0:
        mask = rec_close[:n_rec] > burn_in
    else:
        mask = np.ones(n_rec, dtype=bool)
    records = RecordSet(rec_node[keep][mask], rec_silence[keep][mask],
                        rec_tx[keep][mask], rec_interval[keep][mask],
                        rec_head[keep][mask], rec_tail[keep][mask],
                        rec_eact[keep][mask])
    report = summarize(records, sigma, m, slots, naee_sum, age_sum, deliveries,
                       collisions, erasures, idles, newly_active, active_slots)
    if violations:
        report.identity_violations = int(violations)
    extras = {
        "tx_hash": int(tx_hash), "tx_events": int(tx_events),
        "records": records if keep_records else None,
        "schedule": schedule if record_schedule else None,
        "psi_trace": psi_trace if record_trace else None,
        "age_trace": age_trace if record_trace else None,
    }
    return report, extras


def run_single(cfg: SimConfig, replication: int = 0, keep_records: bool = False,
               record_schedule: bool = False, record_trace: bool = False,
               calibrate: bool = True) -> RunOutput:
    """Execute one replication of a config and return its report."""
    cfg.validate()
    gamma = None
    if (cfg.policy.kind is PolicyKind.SAT and cfg.policy.gamma is None and calibrate):
        gamma = calibrate_sat(cfg.m, cfg.epsilon, cfg.seed)
    policy = resolve_policy(cfg.policy, cfg.m, cfg.sigma, cfg.epsilon,
                            calibrated_gamma=gamma)
    rep_seed = replication_seed(cfg.seed, replication)
    report, extras = _run_kernel(policy, cfg.m, cfg.slots, cfg.sigma,
                                 cfg.epsilon, rep_seed, burn_in=cfg.burn_in,
                                 keep_records=keep_records,
                                 record_schedule=record_schedule,
                                 record_trace=record_trace)
    return RunOutput(report=report, policy=policy, config=cfg,
                     replication=replication, tx_hash=extras["tx_hash"],
                     tx_events=extras["tx_events"], records=extras["records"],
                     schedule=extras["schedule"], psi_trace=extras["psi_trace"],
                     age_trace=extras["age_trace"])


def run_replications(cfg: SimConfig, threads: int = 1) -> list[RunOutput]:
    """All replications of one config, in replication order."""
    cfg.validate()
    if threads <= 1 or cfg.replications == 1:
        return [run_single(cfg, r) for r in range(cfg.replications)]
    payloads = [(cfg.to_dict(), r) for r in range(cfg.replications)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_replication_task, payloads))


def _replication_task(payload) -> RunOutput:
    cfg_dict, replication = payload
    return run_single(SimConfig.from_dict(cfg_dict), replication)


def fmt(value) -> str:
    """CSV cell formatting: ints verbatim, floats at 17 significant digits."""
    if value is None:
        return "nan"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def _beta_or_gamma(policy: PolicyConfig):
    if policy.kind is PolicyKind.EBT:
        return policy.beta
    if policy.kind is PolicyKind.SAT:
        return policy.gamma
    if policy.kind is PolicyKind.STATIONARY:
        return policy.p
    return None


def reference_values(sigma2: float, epsilon: float) -> list[float]:
    """Analytic reference levels for one (sigma2, epsilon) cell."""
    return [E / 2.0 * sigma2, E / 6.0 * sigma2, sigma2 / 2.0,
            E / (6.0 * (1.0 - epsilon)) * sigma2,
            E / (2.0 * (1.0 - epsilon)) * sigma2, 0.88 * sigma2]


def row_cells(out: RunOutput, with_refs: bool = True) -> list[str]:
    cfg, rep = out.config, out.report
    cells = [out.policy.kind.value, cfg.m, cfg.slots, cfg.sigma2, cfg.epsilon,
             _beta_or_gamma(out.policy), cfg.seed, out.replication,
             rep.naee, rep.naaoi, rep.throughput, rep.alpha_hat,
             rep.activation_rate, rep.e_j, rep.e_j2, rep.e_u, rep.e_u2,
             rep.e_i, rep.e_sumsq, rep.wald_ratio, rep.l1, rep.l2,
             rep.l2_closed_form]
    if with_refs:
        cells += reference_values(cfg.sigma2, cfg.epsilon)
    return [fmt(c) for c in cells]


_METRIC_SLICE = slice(8, 23)  # naee .. l2_closed_form


def aggregate_rows(outputs: list[RunOutput], with_refs: bool = True) -> list[list[str]]:
    """Mean and standard-error rows over one cell's replications."""
    first = outputs[0]
    base = row_cells(first, with_refs)
    matrix = np.array([[getattr(o.report, name) for name in
                        ("naee", "naaoi", "throughput", "alpha_hat",
                         "activation_rate", "e_j", "e_j2", "e_u", "e_u2",
                         "e_i", "e_sumsq", "wald_ratio", "l1", "l2",
                         "l2_closed_form")] for o in outputs])
    mean = matrix.mean(axis=0)
    n = len(outputs)
    sem = matrix.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(mean.shape, math.nan)
    rows = []
    for label, vec in (("mean", mean), ("sem", sem)):
        cells = list(base)
        cells[7] = label
        cells[_METRIC_SLICE] = [fmt(v) for v in vec]
        rows.append(cells)
    return rows


def _git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def default_outdir() -> Path:
    return Path(os.environ.get("RACSIM_OUTDIR", "."))


def write_metadata(path: Path, payload: dict) -> None:
    meta = dict(payload)
    meta["git_revision"] = _git_revision()
    meta["numba"] = _kernels.HAVE_NUMBA
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def run_sweep(spec: SweepSpec, out_path: str | Path, threads: int = 1,
              progress=None) -> Path:
    """Execute a sweep and write one CSV (plus a .meta.json sidecar).

    Rows appear in deterministic (policy, axis value, replication) order
    followed by mean/sem aggregate rows per cell; byte-identical for a
    fixed spec regardless of thread count.
    """
    spec.validate()
    started = time.time()
    out_path = Path(out_path)
    cells = list(spec.configs())

    results: dict[tuple[int, int], RunOutput] = {}
    indexed = [(ci, r, cfg) for ci, cfg in enumerate(cells)
               for r in range(cfg.replications)]
    if threads <= 1:
        for ci, r, cfg in indexed:
            results[(ci, r)] = run_single(cfg, r)
            if progress:
                progress(len(results), len(indexed))
    else:
        payloads = [(cfg.to_dict(), r) for ci, r, cfg in indexed]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for (ci, r, _), out in zip(indexed, pool.map(_replication_task, payloads)):
                results[(ci, r)] = out
                if progress:
                    progress(len(results), len(indexed))

    lines = [",".join(CSV_COLUMNS + REFERENCE_COLUMNS)]
    for ci, cfg in enumerate(cells):
        outs = [results[(ci, r)] for r in range(cfg.replications)]
        for o in outs:
            lines.append(",".join(row_cells(o)))
        for row in aggregate_rows(outs):
            lines.append(",".join(row))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        out_path.write_text("\n".join(lines) + "\n")
        write_metadata(out_path.with_suffix(out_path.suffix + ".meta.json"),
                       {"spec": spec.to_dict(), "wall_time_s": time.time() - started,
                        "rows": len(lines) - 1})
    except OSError as exc:
        raise IOError(f"cannot write {out_path}: {exc}") from exc
    return out_path


ORACLE_COLUMNS = ["kind", "barrier", "sigma", "dt", "n_paths", "e_j", "se_e_j",
                  "e_j2", "se_e_j2", "e_int", "se_e_int", "e_sj2", "se_e_sj2",
                  "n_capped", "capped_fraction"]


def oracle_rows(kind: str, moments: HittingMoments, barrier: float,
                sigma: float, dt: float) -> list[str]:
    se = moments.std_errors
    cells = [kind, barrier, sigma, dt, moments.n_paths,
             moments.e_j, se.get("e_j"), moments.e_j2, se.get("e_j2"),
             moments.e_int, se.get("e_int"), moments.e_sj2, se.get("e_sj2"),
             moments.n_capped, moments.capped_fraction]
    return [fmt(c) for c in cells]


def run_oracle_brownian(a: float, dt: float, n_paths: int, seed: int = 1,
                        max_steps: int | None = None) -> tuple[HittingMoments, list[str]]:
    mom = brownian_hitting_moments(a, dt, n_paths, seed=seed,
                                   max_steps=max_steps, check_cap=False)
    return mom, oracle_rows("brownian", mom, a, 1.0, dt)


def run_oracle_walk(beta: float, sigma: float, n_paths: int, seed: int = 1,
                    max_steps: int | None = None) -> tuple[HittingMoments, list[str]]:
    mom = random_walk_hitting_moments(beta, sigma, n_paths, seed=seed,
                                      max_steps=max_steps, check_cap=False)
    return mom, oracle_rows("walk", mom, beta, sigma, 1.0)
