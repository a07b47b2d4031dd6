import logging

import numpy as np
import pytest

from eqfree_uq import gpc
from eqfree_uq.bridge import (EnsembleSpec, LiftingError, OdeEngine, SsaEngine, lift_coarse_to_fine,
                              lift_gpc_to_coarse, restrict_coarse_to_gpc, restrict_fine_to_coarse, xi_points)
from eqfree_uq.catalytic import KineticParams
from eqfree_uq.rng import stream
from eqfree_uq.ssa import FineState


def test_xi_points():
    xis, rule = xi_points("gl", 8)
    np.testing.assert_array_equal(xis, gpc.gl_rule(8).nodes)
    a, none = xi_points("mc", 50, seed=3, burst=1)
    b, _ = xi_points("mc", 50, seed=3, burst=1)
    c, _ = xi_points("mc", 50, seed=3, burst=2)
    assert none is None and np.all(np.abs(a) <= 1)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        xi_points("sobol", 4)


def test_lift_inside_simplex_is_exact():
    c = np.array([[0.5, 0.3, 0.2], [0.1, -0.05, -0.05]])
    xis = gpc.gl_rule(4).nodes
    states, neg = lift_gpc_to_coarse(c, xis)
    np.testing.assert_allclose(states, gpc.expand(c, xis), atol=1e-15)
    assert np.all(neg == 0)


def test_lift_clamps_and_renormalises(caplog):
    c = np.array([[0.5, 0.5, 0.0], [0.0, -0.05, 0.05]])  # theta_* = -0.05 at xi = -1
    with caplog.at_level(logging.WARNING):
        states, neg = lift_gpc_to_coarse(c, np.array([-1.0, 1.0]), warn_at=0.01)
    assert "negative coverage" in caplog.text
    assert neg[0] == pytest.approx(0.05)
    np.testing.assert_allclose(states[0], [0.5 / 1.05, 0.55 / 1.05, 0.0])
    np.testing.assert_allclose(states.sum(axis=1), 1.0)
    raw, _ = lift_gpc_to_coarse(c, np.array([-1.0]), clamp=False)
    np.testing.assert_allclose(raw[0], [0.5, 0.55, -0.05])
    with pytest.raises(LiftingError):
        lift_gpc_to_coarse(c, np.array([-1.0]), fail_at=0.04)


def test_lift_coarse_to_fine_policies():
    theta = np.array([0.2, 0.3, 0.5])
    fine = lift_coarse_to_fine(theta, 1000, 500, stream(1), "multinomial")
    assert fine.shape == (500, 3) and np.all(fine.sum(axis=1) == 1000)
    se = np.sqrt(theta * (1 - theta) / (1000 * 500))
    assert np.all(np.abs(fine.mean(axis=0) / 1000 - theta) < 5 * se)
    rounded = lift_coarse_to_fine(np.array([1 / 3, 1 / 3, 1 / 3]), 100, 2, policy="round")
    np.testing.assert_array_equal(rounded, [[34, 33, 33], [34, 33, 33]])
    per = lift_coarse_to_fine(theta, 10, 2, [stream(0, 0), stream(0, 1)])
    assert per.shape == (2, 3)
    with pytest.raises(ValueError):
        lift_coarse_to_fine(np.array([0.5, 0.6, -0.1]), 10, 1, stream(0))
    with pytest.raises(ValueError):
        lift_coarse_to_fine(theta, 10, 3, [stream(0)])


def test_restriction_is_exact_average():
    states = [FineState([1, 2, 7]), FineState([3, 3, 4])]
    np.testing.assert_array_equal(restrict_fine_to_coarse(states), [0.2, 0.25, 0.55])
    with pytest.raises(ValueError):
        restrict_fine_to_coarse(np.array([[1, 2, 7], [1, 1, 1]]))
    with pytest.raises(ValueError):
        restrict_fine_to_coarse(np.array([[1, 2, 7]]), n_tot=11)


def test_restrict_coarse_to_gpc_both_schemes():
    c = np.array([[0.5, 0.3, 0.2], [0.1, -0.05, -0.05]])
    xis, rule = xi_points("gl", 6)
    np.testing.assert_allclose(restrict_coarse_to_gpc(xis, gpc.expand(c, xis), 1, rule), c, atol=1e-15)
    xs, _ = xi_points("mc", 400, seed=0)
    est = restrict_coarse_to_gpc(xs, gpc.expand(c, xs), 1)
    _, se = gpc.project_mc(xs, gpc.expand(c, xs), 1)
    assert np.all(np.abs(est - c) < 5 * se + 1e-15)


def test_ensemble_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec(scheme="qmc")
    with pytest.raises(ValueError):
        EnsembleSpec(lifting="poisson")
    with pytest.raises(ValueError):
        EnsembleSpec(replicas=0)


def test_ode_engine_zero_steps():
    th = np.array([[0.2, 0.3, 0.5]])
    out = OdeEngine().evolve(th, 6.0, 0.01, 0)
    assert out.shape == (1, 1, 3)


def test_ssa_engine_worker_independent_and_counts():
    eng1 = SsaEngine(KineticParams(n_tot=400), replicas=3, master_seed=9, workers=1)
    eng3 = SsaEngine(KineticParams(n_tot=400), replicas=3, master_seed=9, workers=3)
    th = np.array([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]])
    a = eng1.evolve(th, np.array([6.0, 7.0]), 0.05, 4, key=(2,))
    b = eng3.evolve(th, np.array([6.0, 7.0]), 0.05, 4, key=(2,))
    np.testing.assert_array_equal(a, b)
    assert a.shape == (5, 2, 3)
    np.testing.assert_allclose(a.sum(axis=2), 1.0)
    assert eng1.n_events == eng3.n_events > 0
    c = eng1.evolve(th, np.array([6.0, 7.0]), 0.05, 4, key=(3,))
    assert not np.array_equal(a, c)


def test_ssa_engine_round_policy_starts_on_grid():
    eng = SsaEngine(KineticParams(n_tot=100), replicas=2, lifting="round")
    out = eng.evolve(np.array([[1 / 3, 1 / 3, 1 / 3]]), 6.0, 0.1, 1)
    np.testing.assert_allclose(out[0, 0], [0.34, 0.33, 0.33])


def test_from_spec_uses_ensemble_size():
    eng = SsaEngine.from_spec(EnsembleSpec(replicas=7, n_tot=500), KineticParams(), 3, workers=2)
    assert (eng.replicas, eng.params.n_tot, eng.master_seed, eng.workers) == (7, 500, 3, 2)
