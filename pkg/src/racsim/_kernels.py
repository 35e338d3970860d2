"""Hot simulation kernels.

Two interchangeable implementations of the slot loop and the
first-passage path samplers:

* scalar loops compiled with numba ``@njit`` (the default), and
* a vectorized pure-numpy fallback, selected by setting the
  environment variable ``RACSIM_NO_NUMBA=1`` or when numba is missing.

Both consume the same counter-based streams (racsim.rng), so they agree
bit-for-bit on every integer quantity and to rounding on floats; the
benchmark CLI compares their speed.  The readable per-slot semantics
live in racsim.reference, against which both are tested.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .rng import MASK64, SM_PHI, mix64 as _mix64_py

NUMBA_DISABLED = os.environ.get("RACSIM_NO_NUMBA", "") not in ("", "0")
try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by RACSIM_NO_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # identity decorator, keeps the source importable
        if args and callable(args[0]):
            return args[0]
        def wrap(fn):
            return fn
        return wrap

U64 = np.uint64
_PHI = U64(SM_PHI)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 6.283185307179586
_FNV_OFFSET = U64(0xCBF29CE484222325)
_FNV_PRIME = U64(0x100000001B3)

# policy codes shared with the harness
P_STATIONARY = 0
P_PSEUDO_BAYES = 1
P_SAT = 2
P_EBT = 3
P_MW = 4
P_GREEDY = 5

# outcome codes in the schedule trace
TRACE_IDLE = -1
TRACE_COLLISION = -2


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True)
def _uniform(key, counter):
    u = _mix64(key + (counter + U64(1)) * _PHI)
    return float(u >> U64(11)) * _INV53


@njit(cache=True)
def _normal(key, index):
    a = _mix64(key + (U64(2) * index + U64(1)) * _PHI)
    b = _mix64(key + (U64(2) * index + U64(2)) * _PHI)
    u1 = (float(a >> U64(11)) + 1.0) * _INV53
    u2 = float(b >> U64(11)) * _INV53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


def _slot_loop_impl(policy, m, slots, sigma, epsilon, beta, gamma, p_fixed,
                    lam_hat, src_keys, coin_keys, erase_key, skip_process,
                    rec_node, rec_silence, rec_tx, rec_interval, rec_close,
                    rec_head, rec_tail, rec_eact,
                    schedule_out, psi_trace, age_trace):
    x = np.zeros(m)
    x_hat = np.zeros(m)
    psi = np.zeros(m)
    age = np.zeros(m, dtype=np.int64)
    active = np.zeros(m, dtype=np.bool_)
    cur_silence = np.zeros(m, dtype=np.int64)
    cur_tx = np.zeros(m, dtype=np.int64)
    cur_head = np.zeros(m)
    cur_tail = np.zeros(m)
    cur_eact = np.zeros(m)

    collision_bump = 1.0 / (math.e - 2.0)
    n_hat = 0.0
    p_b = 1.0
    c_prev = 0
    delivered = -1
    pending = 0.0

    naee = 0.0
    naee_c = 0.0
    age_sum = 0
    deliveries = 0
    collisions = 0
    erasures = 0
    idles = 0
    newly_active = 0
    active_slots = 0
    n_rec = 0
    tx_events = 0
    tx_hash = _FNV_OFFSET
    violations = 0
    record_schedule = schedule_out.shape[0] > 1
    record_trace = psi_trace.shape[0] > 1
    uses_coins = policy <= P_EBT

    for k in range(1, slots + 1):
        # apply the previous slot's delivery at the slot boundary
        if delivered >= 0:
            i = delivered
            interval = age[i]
            rec_node[n_rec] = i
            rec_silence[n_rec] = cur_silence[i]
            rec_tx[n_rec] = cur_tx[i]
            rec_interval[n_rec] = interval
            rec_close[n_rec] = k - 1
            rec_head[n_rec] = cur_head[i]
            rec_tail[n_rec] = cur_tail[i]
            rec_eact[n_rec] = cur_eact[i]
            if interval != cur_silence[i] - 1 + cur_tx[i]:
                violations += 1
            n_rec += 1
            x_hat[i] = pending
            active[i] = False
            cur_silence[i] = 0
            cur_tx[i] = 0
            cur_head[i] = 0.0
            cur_tail[i] = 0.0
            cur_eact[i] = 0.0
            age[i] = 0
            delivered = -1
        for i in range(m):
            age[i] += 1

        if uses_coins and policy != P_STATIONARY:
            if c_prev == 1:
                n_hat = n_hat + lam_hat + collision_bump
            else:
                dec = n_hat - 1.0
                if dec < 0.0:
                    dec = 0.0
                n_hat = lam_hat + dec
            p_b = 1.0 if n_hat < 1.0 else 1.0 / n_hat

        if not skip_process:
            for i in range(m):
                z = _normal(src_keys[i], U64(k - 1))
                x[i] += sigma * z
                psi[i] = abs(x[i] - x_hat[i])

        n_tx = 0
        tx = -1
        if policy >= P_MW:
            # centralized: schedule the argmax, first index on ties
            best = -1
            if policy == P_MW:
                best_age = np.int64(-1)
                for i in range(m):
                    if age[i] > best_age:
                        best_age = age[i]
                        best = i
            else:
                best_err = -1.0
                for i in range(m):
                    if psi[i] > best_err:
                        best_err = psi[i]
                        best = i
            if not active[best]:
                active[best] = True
                cur_silence[best] = age[best]
                cur_eact[best] = psi[best]
                newly_active += 1
            n_tx = 1
            tx = best
        else:
            p_tx = p_fixed if policy == P_STATIONARY else p_b
            for i in range(m):
                if not active[i]:
                    if policy == P_EBT:
                        hit = psi[i] >= beta
                    elif policy == P_SAT:
                        hit = age[i] >= gamma
                    else:
                        hit = True  # stationary / pseudo-Bayes: active all slots
                    if hit:
                        active[i] = True
                        cur_silence[i] = age[i]
                        cur_eact[i] = psi[i]
                        newly_active += 1
                if active[i]:
                    if _uniform(coin_keys[i], U64(k)) < p_tx:
                        n_tx += 1
                        tx = i
                        tx_hash = (tx_hash ^ U64(k * m + i)) * _FNV_PRIME
                        tx_events += 1

        # per-slot accumulation (after activation, before the boundary)
        for i in range(m):
            if active[i]:
                cur_tx[i] += 1
                active_slots += 1
            if not skip_process:
                sq = psi[i] * psi[i]
                if cur_silence[i] == 0 or age[i] <= cur_silence[i]:
                    cur_head[i] += sq
                else:
                    cur_tail[i] += sq
                y = sq - naee_c
                t = naee + y
                naee_c = (t - naee) - y
                naee = t
            age_sum += age[i]

        if record_trace:
            for i in range(m):
                psi_trace[k, i] = psi[i]
                age_trace[k, i] = age[i]

        if n_tx == 0:
            idles += 1
            c_prev = 0
            if record_schedule:
                schedule_out[k] = TRACE_IDLE
        elif n_tx >= 2:
            collisions += 1
            c_prev = 1
            if record_schedule:
                schedule_out[k] = TRACE_COLLISION
        else:
            c_prev = 0
            if record_schedule:
                schedule_out[k] = tx
            if epsilon > 0.0 and _uniform(erase_key, U64(k)) < epsilon:
                erasures += 1
            else:
                delivered = tx
                pending = x[tx]
                deliveries += 1

    if delivered >= 0:
        # a delivery in the final slot still closes its interval
        i = delivered
        rec_node[n_rec] = i
        rec_silence[n_rec] = cur_silence[i]
        rec_tx[n_rec] = cur_tx[i]
        rec_interval[n_rec] = age[i]
        rec_close[n_rec] = slots
        rec_head[n_rec] = cur_head[i]
        rec_tail[n_rec] = cur_tail[i]
        rec_eact[n_rec] = cur_eact[i]
        if age[i] != cur_silence[i] - 1 + cur_tx[i]:
            violations += 1
        n_rec += 1

    return (naee, age_sum, deliveries, collisions, erasures, idles,
            newly_active, active_slots, n_rec, tx_events, tx_hash, violations)


slot_loop_python = _slot_loop_impl
slot_loop_jit = njit(cache=True)(_slot_loop_impl) if HAVE_NUMBA else None


def _mix64_arr(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


def slot_loop_numpy(policy, m, slots, sigma, epsilon, beta, gamma, p_fixed,
                    lam_hat, src_keys, coin_keys, erase_key, skip_process,
                    rec_node, rec_silence, rec_tx, rec_interval, rec_close,
                    rec_head, rec_tail, rec_eact,
                    schedule_out, psi_trace, age_trace):
    """Pure-numpy slot loop, semantically identical to the jit kernel."""
    x = np.zeros(m)
    x_hat = np.zeros(m)
    psi = np.zeros(m)
    age = np.zeros(m, dtype=np.int64)
    active = np.zeros(m, dtype=bool)
    cur_silence = np.zeros(m, dtype=np.int64)
    cur_tx = np.zeros(m, dtype=np.int64)
    cur_head = np.zeros(m)
    cur_tail = np.zeros(m)
    cur_eact = np.zeros(m)

    collision_bump = 1.0 / (math.e - 2.0)
    n_hat, p_b, c_prev = 0.0, 1.0, 0
    delivered, pending = -1, 0.0
    naee, naee_c = 0.0, 0.0
    age_sum = deliveries = collisions = erasures = idles = 0
    newly_active = active_slots = n_rec = tx_events = 0
    tx_hash = int(_FNV_OFFSET)
    fnv_prime = int(_FNV_PRIME)
    violations = 0
    record_schedule = schedule_out.shape[0] > 1
    record_trace = psi_trace.shape[0] > 1
    uses_coins = policy <= P_EBT
    src_u = src_keys.astype(np.uint64)
    coin_u = coin_keys.astype(np.uint64)
    erase_i = int(erase_key)

    for k in range(1, slots + 1):
        if delivered >= 0:
            i = delivered
            interval = int(age[i])
            rec_node[n_rec] = i
            rec_silence[n_rec] = cur_silence[i]
            rec_tx[n_rec] = cur_tx[i]
            rec_interval[n_rec] = interval
            rec_close[n_rec] = k - 1
            rec_head[n_rec] = cur_head[i]
            rec_tail[n_rec] = cur_tail[i]
            rec_eact[n_rec] = cur_eact[i]
            if interval != int(cur_silence[i]) - 1 + int(cur_tx[i]):
                violations += 1
            n_rec += 1
            x_hat[i] = pending
            active[i] = False
            cur_silence[i] = 0
            cur_tx[i] = 0
            cur_head[i] = 0.0
            cur_tail[i] = 0.0
            cur_eact[i] = 0.0
            age[i] = 0
            delivered = -1
        age += 1

        if uses_coins and policy != P_STATIONARY:
            if c_prev == 1:
                n_hat = n_hat + lam_hat + collision_bump
            else:
                n_hat = lam_hat + max(n_hat - 1.0, 0.0)
            p_b = 1.0 if n_hat < 1.0 else 1.0 / n_hat

        if not skip_process:
            off_a = np.uint64(((2 * (k - 1) + 1) * SM_PHI) & MASK64)
            off_b = np.uint64(((2 * (k - 1) + 2) * SM_PHI) & MASK64)
            a = _mix64_arr(src_u + off_a)
            b = _mix64_arr(src_u + off_b)
            u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
            u2 = (b >> np.uint64(11)).astype(np.float64) * _INV53
            z = np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)
            x += sigma * z
            np.abs(x - x_hat, out=psi)

        if policy >= P_MW:
            best = int(np.argmax(age)) if policy == P_MW else int(np.argmax(psi))
            if not active[best]:
                active[best] = True
                cur_silence[best] = age[best]
                cur_eact[best] = psi[best]
                newly_active += 1
            n_tx, tx = 1, best
        else:
            if policy == P_EBT:
                crossing = ~active & (psi >= beta)
            elif policy == P_SAT:
                crossing = ~active & (age >= gamma)
            else:
                crossing = ~active
            if crossing.any():
                cur_silence[crossing] = age[crossing]
                cur_eact[crossing] = psi[crossing]
                newly_active += int(crossing.sum())
                active |= crossing
            p_tx = p_fixed if policy == P_STATIONARY else p_b
            u = _mix64_arr(coin_u + np.uint64(((k + 1) * SM_PHI) & MASK64))
            coins = (u >> np.uint64(11)).astype(np.float64) * _INV53
            transmitting = active & (coins < p_tx)
            n_tx = int(transmitting.sum())
            tx = -1
            if n_tx:
                for i in np.nonzero(transmitting)[0]:
                    tx = int(i)
                    tx_hash = ((tx_hash ^ (k * m + tx)) * fnv_prime) & MASK64
                    tx_events += 1

        cur_tx[active] += 1
        active_slots += int(active.sum())
        if not skip_process:
            sq = psi * psi
            head_mask = (cur_silence == 0) | (age <= cur_silence)
            cur_head[head_mask] += sq[head_mask]
            cur_tail[~head_mask] += sq[~head_mask]
            y = float(sq.sum()) - naee_c
            t = naee + y
            naee_c = (t - naee) - y
            naee = t
        age_sum += int(age.sum())

        if record_trace:
            psi_trace[k] = psi
            age_trace[k] = age

        if n_tx == 0:
            idles += 1
            c_prev = 0
            if record_schedule:
                schedule_out[k] = TRACE_IDLE
        elif n_tx >= 2:
            collisions += 1
            c_prev = 1
            if record_schedule:
                schedule_out[k] = TRACE_COLLISION
        else:
            c_prev = 0
            if record_schedule:
                schedule_out[k] = tx
            u_e = (_mix64_py(erase_i + (k + 1) * SM_PHI) >> 11) * _INV53
            if epsilon > 0.0 and u_e < epsilon:
                erasures += 1
            else:
                delivered = tx
                pending = x[tx]
                deliveries += 1

    if delivered >= 0:
        i = delivered
        rec_node[n_rec] = i
        rec_silence[n_rec] = cur_silence[i]
        rec_tx[n_rec] = cur_tx[i]
        rec_interval[n_rec] = age[i]
        rec_close[n_rec] = slots
        rec_head[n_rec] = cur_head[i]
        rec_tail[n_rec] = cur_tail[i]
        rec_eact[n_rec] = cur_eact[i]
        if int(age[i]) != int(cur_silence[i]) - 1 + int(cur_tx[i]):
            violations += 1
        n_rec += 1

    return (naee, age_sum, deliveries, collisions, erasures, idles,
            newly_active, active_slots, n_rec, tx_events, np.uint64(tx_hash),
            violations)


def _brownian_paths_impl(a, dt, n_paths, seed, max_steps):
    np.random.seed(seed)
    sq_dt = math.sqrt(dt)
    s_j = s_j2 = s_j4 = 0.0      # hitting time moments (and se bookkeeping)
    s_int = s_int2 = 0.0         # integral of B^2 dt
    s_b2 = s_b4 = 0.0            # B at the crossing, squared
    capped = 0
    for _ in range(n_paths):
        b = 0.0
        ib = 0.0
        steps = 0
        hit = False
        while steps < max_steps:
            b += sq_dt * np.random.normal(0.0, 1.0)
            steps += 1
            ib += b * b * dt
            if abs(b) >= a:
                hit = True
                break
        if not hit:
            capped += 1
            continue
        j = steps * dt
        s_j += j
        s_j2 += j * j
        s_j4 += (j * j) * (j * j)
        s_int += ib
        s_int2 += ib * ib
        s_b2 += b * b
        s_b4 += (b * b) * (b * b)
    return s_j, s_j2, s_j4, s_int, s_int2, s_b2, s_b4, capped


def _walk_paths_impl(beta, sigma, n_paths, seed, max_steps):
    np.random.seed(seed)
    s_j = s_j2 = s_j4 = 0.0
    s_sum = s_sum2 = 0.0         # sum of S_n^2 up to and including the crossing
    s_b2 = s_b4 = 0.0            # S at the crossing, squared
    capped = 0
    for _ in range(n_paths):
        s = 0.0
        acc = 0.0
        n = 0
        hit = False
        while n < max_steps:
            s += sigma * np.random.normal(0.0, 1.0)
            n += 1
            acc += s * s
            if abs(s) >= beta:
                hit = True
                break
        if not hit:
            capped += 1
            continue
        j = float(n)
        s_j += j
        s_j2 += j * j
        s_j4 += (j * j) * (j * j)
        s_sum += acc
        s_sum2 += acc * acc
        s_b2 += s * s
        s_b4 += (s * s) * (s * s)
    return s_j, s_j2, s_j4, s_sum, s_sum2, s_b2, s_b4, capped


brownian_paths_jit = njit(cache=True)(_brownian_paths_impl) if HAVE_NUMBA else None
walk_paths_jit = njit(cache=True)(_walk_paths_impl) if HAVE_NUMBA else None


def brownian_paths_numpy(a, dt, n_paths, seed, max_steps, chunk=4096):
    """Vectorized fallback; statistically equivalent, not bit-matched."""
    rng = np.random.default_rng(seed)
    sq_dt = math.sqrt(dt)
    out = np.zeros(8)
    done = 0
    while done < n_paths:
        size = min(chunk, n_paths - done)
        b = np.zeros(size)
        ib = np.zeros(size)
        alive = np.ones(size, dtype=bool)
        steps = 0
        while alive.any() and steps < max_steps:
            idx = np.nonzero(alive)[0]
            b[idx] += sq_dt * rng.standard_normal(idx.size)
            ib[idx] += b[idx] * b[idx] * dt
            steps += 1
            hit = idx[np.abs(b[idx]) >= a]
            if hit.size:
                alive[hit] = False
                j = steps * dt
                out[0] += hit.size * j
                out[1] += hit.size * j * j
                out[2] += hit.size * (j * j) * (j * j)
                out[3] += ib[hit].sum()
                out[4] += (ib[hit] ** 2).sum()
                out[5] += (b[hit] ** 2).sum()
                out[6] += (b[hit] ** 4).sum()
        out[7] += int(alive.sum())
        done += size
    return tuple(out[:7]) + (int(out[7]),)


def walk_paths_numpy(beta, sigma, n_paths, seed, max_steps, chunk=4096):
    rng = np.random.default_rng(seed)
    out = np.zeros(8)
    done = 0
    while done < n_paths:
        size = min(chunk, n_paths - done)
        s = np.zeros(size)
        acc = np.zeros(size)
        alive = np.ones(size, dtype=bool)
        steps = 0
        while alive.any() and steps < max_steps:
            idx = np.nonzero(alive)[0]
            s[idx] += sigma * rng.standard_normal(idx.size)
            acc[idx] += s[idx] * s[idx]
            steps += 1
            hit = idx[np.abs(s[idx]) >= beta]
            if hit.size:
                alive[hit] = False
                j = float(steps)
                out[0] += hit.size * j
                out[1] += hit.size * j * j
                out[2] += hit.size * (j * j) * (j * j)
                out[3] += acc[hit].sum()
                out[4] += (acc[hit] ** 2).sum()
                out[5] += (s[hit] ** 2).sum()
                out[6] += (s[hit] ** 4).sum()
        out[7] += int(alive.sum())
        done += size
    return tuple(out[:7]) + (int(out[7]),)


def run_slot_loop_python(*args):
    """Uncompiled scalar kernel; tests-only (slow, silences uint64 wraps)."""
    with np.errstate(over="ignore"):
        return slot_loop_python(*args)


def run_slot_loop(*args):
    if HAVE_NUMBA:
        return slot_loop_jit(*args)
    return slot_loop_numpy(*args)


def run_brownian_paths(*args):
    if HAVE_NUMBA:
        return brownian_paths_jit(*args)
    return brownian_paths_numpy(*args)


def run_walk_paths(*args):
    if HAVE_NUMBA:
        return walk_paths_jit(*args)
    return walk_paths_numpy(*args)
