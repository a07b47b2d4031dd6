import math

import numpy as np
import pytest

from eqfree_uq.catalytic import KineticParams, network, propensities
from eqfree_uq.oracle import integrate_coarse
from eqfree_uq.rng import stream
from eqfree_uq.ssa import (FineState, ReactionNetwork, SystemExhausted, select_reaction, simulate_catalytic,
                           simulate_sampled, time_increment)


def reference_ssa(counts, times, params, rng):
    """Straight transcription of the direct method, for cross-checking."""
    stoich = np.array([[1, 0, -1], [0, 2, -2], [-1, 0, 1], [-1, -1, 2]])
    counts = np.array(counts, dtype=np.int64)
    t, k, out = 0.0, 0, []
    while k < len(times):
        a = propensities(counts, params)
        u1, u2 = rng.random(), 1.0 - rng.random()
        if a.sum() <= 0:
            out += [counts.copy()] * (len(times) - k)
            break
        cum = np.cumsum(a)
        j = next(i for i in range(4) if a[i] > 0 and u1 * a.sum() <= cum[i])
        t_next = t - math.log(u2) / a.sum()
        while k < len(times) and times[k] < t_next:
            out.append(counts.copy())
            k += 1
        counts = counts + stoich[j]
        t = t_next
    return np.array(out)


def test_select_reaction_boundaries():
    rates = [1.0, 0.0, 2.0, 1.0]
    assert select_reaction(rates, 0.0) == 0
    assert select_reaction(rates, 0.25) == 0  # tie at the boundary goes low
    assert select_reaction(rates, 0.2500001) == 2
    assert select_reaction(rates, 0.75) == 2
    assert select_reaction(rates, 1.0) == 3
    assert select_reaction([0.0, 0.0, 3.0, 0.0], 0.0) == 2  # zero channels never fire
    assert select_reaction([1.0, 0.0], 1.0) == 0
    with pytest.raises(SystemExhausted):
        select_reaction([0.0, 0.0], 0.5)


def test_time_increment():
    assert time_increment([2.0, 2.0], 1.0) > 0.0
    assert time_increment([1.0], math.exp(-1.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        time_increment([1.0], 0.0)
    with pytest.raises(SystemExhausted):
        time_increment([0.0], 0.5)


def test_kernel_matches_reference_and_python_path():
    params = KineticParams(beta=6.0, n_tot=400)
    times = np.linspace(0.0, 2.0, 21)
    counts0 = np.array([100, 180, 120])
    ref = reference_ssa(counts0, times, params, stream(7, 1, 2))
    fast, frozen, n_events = simulate_catalytic(counts0, 0.0, times, params, stream(7, 1, 2))
    run = simulate_sampled(FineState(counts0), times, network(params), stream(7, 1, 2))
    slow = np.array([s.counts for s in run.snapshots])
    np.testing.assert_array_equal(fast, ref)
    np.testing.assert_array_equal(fast, slow)
    assert n_events == run.n_events > 0
    assert not frozen.any()


def test_invariants_along_path():
    params = KineticParams(beta=10.0, n_tot=900)
    times = np.linspace(0, 5, 501)
    out, _, _ = simulate_catalytic(np.array([300, 300, 300]), 0.0, times, params, stream(1, 0))
    assert np.all(out >= 0)
    assert np.all(out.sum(axis=1) == 900)


def test_right_continuous_snapshot_at_t0():
    params = KineticParams(n_tot=100)
    out, _, _ = simulate_catalytic(np.array([10, 20, 70]), 0.0, np.array([0.0]), params, stream(0))
    np.testing.assert_array_equal(out[0], [10, 20, 70])


def test_exhausted_system_freezes():
    params = KineticParams(alpha=0.0, gamma=0.0, n_tot=10)
    out, frozen, n = simulate_catalytic(np.array([0, 10, 0]), 0.0, np.array([0.0, 1.0]), params, stream(0))
    assert frozen.all() and n == 0
    np.testing.assert_array_equal(out, [[0, 10, 0], [0, 10, 0]])
    run = simulate_sampled(FineState([0, 10, 0]), [0.0, 1.0], network(params), stream(0))
    assert run.frozen.all()


def test_rejects_bad_times():
    with pytest.raises(ValueError):
        simulate_catalytic(np.array([1, 1, 1]), 1.0, np.array([0.5]), KineticParams(n_tot=3), stream(0))
    with pytest.raises(ValueError):
        FineState([-1, 2, 3])


def test_linear_decay_statistics():
    """A -> 0 at rate k: counts at t are Binomial(N0, exp(-k t))."""
    net = ReactionNetwork(np.array([[-1]]), lambda c, k: np.array([k * c[0]]), params=0.5)
    n0, t = 50, 1.0
    finals = []
    for r in range(2000):
        run = simulate_sampled(FineState([n0]), [t], net, stream(11, r))
        finals.append(run.snapshots[0].counts[0])
    p = math.exp(-0.5 * t)
    mean, var = np.mean(finals), np.var(finals, ddof=1)
    se = math.sqrt(n0 * p * (1 - p) / len(finals))
    assert abs(mean - n0 * p) < 4 * se
    assert abs(var / (n0 * p * (1 - p)) - 1) < 0.15


def test_large_system_follows_mean_field():
    params = KineticParams(beta=6.0, n_tot=40_000)
    theta0 = np.array([0.25, 0.45, 0.30])
    times = np.linspace(0, 1.0, 11)
    runs = [simulate_catalytic(np.round(theta0 * 40_000).astype(np.int64), 0.0, times, params, stream(5, r))[0]
            for r in range(8)]
    cover = np.array(runs) / 40_000
    _, ode = integrate_coarse(theta0, 6.0, (0.0, 1.0), 1e-3, out_every=100)
    se = cover.std(axis=0, ddof=1) / math.sqrt(8) + 1e-4
    assert np.all(np.abs(cover.mean(axis=0) - ode) < 5 * se)


def test_conservation_check_on_network():
    with pytest.raises(ValueError):
        ReactionNetwork(np.array([[1, 0]]), lambda c, p: np.ones(1), conserved=True)
