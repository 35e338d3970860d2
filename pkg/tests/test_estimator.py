import numpy as np
import pytest

from racsim.channel import ChannelConfig, SlotKind, resolve_slot
from racsim.estimator import ReceiverView, apply_slot, error_vector
from racsim.harness import SimConfig, run_single
from racsim.policies import PolicyConfig, PolicyKind
from racsim.process import SourceEnsemble, SourceState, make_streams, step_sources


def idle(m):
    return resolve_slot(set(), ChannelConfig(m=m))


def test_initial_view():
    v = ReceiverView.initial(3)
    assert np.all(v.estimates == 0.0)
    assert np.all(v.ages == 1)
    assert v.slot == 1


def test_idle_ages_increment():
    v = ReceiverView.initial(3)
    v2 = apply_slot(v, idle(3))
    assert np.all(v2.ages == 2)
    assert np.array_equal(v2.estimates, v.estimates)
    assert v2.slot == 2


def test_delivery_resets_age_next_slot():
    v = ReceiverView.initial(3)
    out = resolve_slot({2}, ChannelConfig(m=3), slot=1)
    v2 = apply_slot(v, out, delivered_value=4.25)
    assert v2.estimates[2] == 4.25
    assert v2.ages[2] == 1
    assert v2.ages[0] == 2
    assert v2.last_delivery_slot[2] == 1
    # age recursion: h(k+1) = 1 on delivery else h(k) + 1
    assert np.array_equal(v2.ages, np.array([2, 2, 1]))


def test_erased_identical_to_idle():
    from racsim.rng import NoiseStream

    v = ReceiverView.initial(2)
    erased = resolve_slot({1}, ChannelConfig(epsilon=0.999, m=2,
                                             noise=NoiseStream(3, 0)), slot=5)
    if erased.kind is not SlotKind.ERASED:
        pytest.skip("erasure draw did not fire for this seed/slot")
    v_erased = apply_slot(v, erased)
    v_idle = apply_slot(v, idle(2))
    assert np.array_equal(v_erased.ages, v_idle.ages)
    assert np.array_equal(v_erased.estimates, v_idle.estimates)


def test_delivered_value_required_and_rejected():
    v = ReceiverView.initial(2)
    out = resolve_slot({0}, ChannelConfig(m=2), slot=1)
    with pytest.raises(ValueError):
        apply_slot(v, out)  # missing value
    with pytest.raises(ValueError):
        apply_slot(v, idle(2), delivered_value=1.0)  # spurious value


def test_error_vector_slot_mismatch():
    v = ReceiverView.initial(2)
    state = SourceState.initial(2, 1.0)  # slot 0 vs view slot 1
    with pytest.raises(ValueError):
        error_vector(state, v)


def test_error_vector_zero_sigma():
    state = SourceState.initial(2, 0.0)
    streams = make_streams(1, 2)
    state = step_sources(state, streams)
    v = ReceiverView.initial(2)
    err = error_vector(state, v)
    assert np.all(err.psi == 0.0)


def test_error_is_window_sum_of_innovations():
    # drive a few slots by hand; psi must equal |X(k) - X(k_last)| exactly
    seed, m, sigma = 31, 2, 1.3
    state = SourceState.initial(m, sigma)
    streams = make_streams(seed, m)
    view = ReceiverView.initial(m)
    ens = SourceEnsemble(seed, m, sigma)
    outcomes = {3: 0, 7: 1, 11: 0}  # slot -> delivered node
    for k in range(1, 15):
        state = step_sources(state, streams)
        err = error_vector(state, view)
        for i in range(m):
            expected = abs(ens.increment_window_sum(i, int(view.last_delivery_slot[i]), k))
            assert err.psi[i] == pytest.approx(expected, rel=1e-9, abs=1e-12)
        if k in outcomes:
            node = outcomes[k]
            out = resolve_slot({node}, ChannelConfig(m=m), slot=k)
            view = apply_slot(view, out, delivered_value=float(state.values[node]))
        else:
            view = apply_slot(view, idle(m))


def test_post_delivery_error_is_one_innovation():
    seed, m, sigma = 8, 1, 2.0
    state = SourceState.initial(m, sigma)
    streams = make_streams(seed, m)
    view = ReceiverView.initial(m)
    state = step_sources(state, streams)
    out = resolve_slot({0}, ChannelConfig(m=m), slot=1)
    view = apply_slot(view, out, delivered_value=float(state.values[0]))
    state = step_sources(state, streams)
    err = error_vector(state, view)
    ens = SourceEnsemble(seed, m, sigma)
    assert err.psi[0] == pytest.approx(abs(ens.innovations(0, 1, 2)[0]), rel=1e-12)


def test_age_trajectory_invariant_to_sigma_for_oblivious_policy():
    base = dict(m=20, slots=15_000, policy=PolicyConfig(PolicyKind.SAT, gamma=45),
                seed=606, replications=1)
    a = run_single(SimConfig(sigma2=1.0, **base), calibrate=False)
    b = run_single(SimConfig(sigma2=7.5, **base), calibrate=False)
    assert a.report.naaoi == b.report.naaoi
    assert a.report.deliveries == b.report.deliveries
    assert a.tx_hash == b.tx_hash


def test_mean_error_tracks_age_times_sigma2():
    # age-error coupling for an oblivious policy: mean psi^2 ~= sigma^2 * mean h
    out = run_single(SimConfig(m=20, slots=1_000_000, sigma2=2.0,
                               policy=PolicyConfig(PolicyKind.SAT, gamma=45),
                               seed=11, replications=1), calibrate=False)
    r = out.report
    ratio = r.naee / (2.0 * r.naaoi)
    assert abs(ratio - 1.0) <= 0.02
