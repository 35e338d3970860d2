"""Independent first-passage Monte-Carlo estimators.

Brute-force estimates of the two-sided hitting moments that underpin
the threshold analysis:

* Brownian motion hitting |B| = a, Euler-discretized with a step chosen
  relative to a^2 (built-in targets: E[J] = a^2, E[J^2] = 5 a^4 / 3,
  E[int B^2 dt] = a^4 / 6);
* the discrete Gaussian walk hitting |S| = beta, where the stopped
  second-moment identity E[S_J^2] = sigma^2 E[J] is exact and the
  continuum values carry an O(sigma/beta) overshoot bias.

These samplers share no code with the simulator's process stepper and
draw from a different generator family, so they are a genuine
cross-check of the main loop's interval statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ._kernels import run_brownian_paths, run_walk_paths

MAX_STEP_CEILING = 100_000_000  # absolute guard so degenerate configs terminate
CAPPED_FRACTION_LIMIT = 1e-4


class PathCapExceeded(RuntimeError):
    """Raised when more than the tolerated fraction of paths never hit."""

    def __init__(self, fraction: float, moments: "HittingMoments"):
        super().__init__(f"capped path fraction {fraction:.3g} exceeds "
                         f"{CAPPED_FRACTION_LIMIT:g}")
        self.fraction = fraction
        self.moments = moments


@dataclass
class HittingMoments:
    """Moment estimates of one first-passage experiment."""

    e_j: float                 # mean hitting time
    e_j2: float                # mean squared hitting time
    e_int: float               # mean integral/sum of the squared path
    e_sj2: float               # mean squared boundary value at the hit
    n_paths: int               # paths that actually hit
    n_capped: int              # paths stopped by the step cap (excluded)
    std_errors: dict[str, float] = field(default_factory=dict)

    @property
    def capped_fraction(self) -> float:
        total = self.n_paths + self.n_capped
        return self.n_capped / total if total else 0.0


def _se(mean: float, mean_sq: float, n: int) -> float:
    if n < 2:
        return math.inf
    var = max(mean_sq - mean * mean, 0.0)
    return math.sqrt(var / n)


def _build(raw, n_paths: int, check_cap: bool) -> HittingMoments:
    s_j, s_j2, s_j4, s_int, s_int2, s_b2, s_b4, capped = raw
    n = n_paths - capped
    if n <= 0:
        mom = HittingMoments(math.nan, math.nan, math.nan, math.nan, 0, capped)
        if check_cap:
            raise PathCapExceeded(1.0, mom)
        return mom
    mom = HittingMoments(
        e_j=s_j / n, e_j2=s_j2 / n, e_int=s_int / n, e_sj2=s_b2 / n,
        n_paths=n, n_capped=capped,
        std_errors={
            "e_j": _se(s_j / n, s_j2 / n, n),
            "e_j2": _se(s_j2 / n, s_j4 / n, n),
            "e_int": _se(s_int / n, s_int2 / n, n),
            "e_sj2": _se(s_b2 / n, s_b4 / n, n),
        },
    )
    if check_cap and mom.capped_fraction > CAPPED_FRACTION_LIMIT:
        raise PathCapExceeded(mom.capped_fraction, mom)
    return mom


def brownian_hitting_moments(a: float, dt: float, n_paths: int,
                             seed: int = 1, max_steps: int | None = None,
                             check_cap: bool = True,
                             enforce_resolution: bool = True) -> HittingMoments:
    """Euler-walk estimates of the Brownian two-sided hitting moments.

    The step must satisfy dt <= 1e-3 a^2; the default cap allows 1000x
    the mean hitting time, clipped to an absolute ceiling.  Passing
    ``enforce_resolution=False`` permits barriers below the resolution
    limit; estimates then floor at dt (resolution-limited, not an error).
    """
    if a <= 0:
        raise ValueError("barrier a must be > 0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if enforce_resolution and dt > 1e-3 * a * a:
        raise ValueError(f"dt={dt:g} too coarse; need dt <= 1e-3 * a^2 = {1e-3 * a * a:g}")
    if n_paths < 1:
        raise ValueError("need at least one path")
    if max_steps is None:
        max_steps = int(min(max(1e3 * a * a / dt, 1e3), MAX_STEP_CEILING))
    raw = run_brownian_paths(float(a), float(dt), int(n_paths), int(seed) & 0x7FFFFFFF,
                             int(max_steps))
    return _build(raw, n_paths, check_cap)


def random_walk_hitting_moments(beta: float, sigma: float, n_paths: int,
                                seed: int = 1, max_steps: int | None = None,
                                check_cap: bool = True) -> HittingMoments:
    """Discrete-walk estimates; ``e_int`` is E[sum_{j<=J} S_j^2]."""
    if beta <= 0:
        raise ValueError("threshold beta must be > 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if n_paths < 1:
        raise ValueError("need at least one path")
    if max_steps is None:
        ratio = beta / sigma
        max_steps = int(min(1e3 * ratio * ratio, MAX_STEP_CEILING))
    raw = run_walk_paths(float(beta), float(sigma), int(n_paths),
                         int(seed) & 0x7FFFFFFF, int(max_steps))
    return _build(raw, n_paths, check_cap)
