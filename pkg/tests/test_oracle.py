import numpy as np
import pytest

from eqfree_uq import gpc
from eqfree_uq.catalytic import BetaSpec, KineticParams, coarse_rhs
from eqfree_uq.oracle import (count_roots, fold_scan, integrate_coarse, reference_gpc_trajectory, rk4_series,
                              steady_state_root, steps_for)

P = KineticParams()


def cubic_roots(beta, p=P):
    """Interior steady states from the vacancy cubic.

    Eliminating theta_A = s (alpha - beta s) / gamma and theta_B = beta s^2 / (k_r theta_A)
    from the sum constraint leaves, after dividing out s,
    k_r s (alpha - beta s)^2 / gamma^2 + beta s + k_r (alpha - beta s)(s - 1) / gamma = 0.
    """
    al, ga, kr = p.alpha, p.gamma, p.k_r
    s = np.polynomial.Polynomial([0, 1])
    poly = kr * s * (al - beta * s) ** 2 / ga**2 + beta * s + kr * (al - beta * s) * (s - 1) / ga
    out = []
    for r in poly.roots():
        if abs(r.imag) > 1e-12 or not 0 < r.real < 1:
            continue
        s0 = r.real
        a = s0 * (al - beta * s0) / ga
        if a <= 0:
            continue
        b = beta * s0**2 / (kr * a)
        if b < 0 or a + b > 1 + 1e-9:
            continue
        out.append(np.array([a, b, s0]))
    return sorted(out, key=lambda th: -th[0])


def test_steps_for():
    assert steps_for(0.4, 1e-3) == 400
    with pytest.raises(ValueError):
        steps_for(0.0105, 1e-3)


def test_rk4_fourth_order_and_conservation():
    theta0 = np.array([0.25, 0.45, 0.30])
    _, a = integrate_coarse(theta0, 6.0, (0.0, 1.0), dt=0.02)
    _, b = integrate_coarse(theta0, 6.0, (0.0, 1.0), dt=0.01)
    _, c = integrate_coarse(theta0, 6.0, (0.0, 1.0), dt=0.005)
    ratio = np.abs(a[-1] - b[-1]).max() / np.abs(b[-1] - c[-1]).max()
    assert 12 < ratio < 20
    assert np.all(np.abs(c.sum(axis=1) - 1.0) < 1e-13)


def test_rk4_series_independent_nodes():
    thetas = np.array([[0.25, 0.45, 0.30], [0.9, 0.05, 0.05]])
    out = rk4_series(thetas, np.array([6.0, 12.0]), 1e-3, 10, 5)
    _, single = integrate_coarse(thetas[1], 12.0, (0.0, 0.05), 1e-3, out_every=10)
    np.testing.assert_array_equal(out[:, 1], single)


def test_relaxes_to_steady_state():
    _, traj = integrate_coarse(np.array([0.9, 0.05, 0.05]), 10.0, (0.0, 200.0), dt=1e-2, out_every=20000)
    assert np.abs(coarse_rhs(traj[-1], 10.0, P)).max() < 1e-10


@pytest.mark.parametrize("beta", [3.0, 6.0, 10.0, 16.0, 20.0])
def test_steady_states_match_cubic(beta):
    found = steady_state_root(beta)
    expected = cubic_roots(beta)
    assert len(found) == len(expected)
    for s, e in zip(found, expected):
        np.testing.assert_allclose(s.theta, e, atol=1e-10)


def test_steady_state_values_and_stability():
    roots = steady_state_root(10.0)
    assert [r.stable for r in roots] == [True, False, True]
    np.testing.assert_allclose(roots[0].theta, [0.96799, 0.0022810, 0.029727], atol=2e-5)
    np.testing.assert_allclose(roots[1].theta, [0.80592, 0.057694, 0.13639], atol=2e-4)
    np.testing.assert_allclose(roots[2].theta, [0.082, 0.760, 0.158], atol=2e-3)
    assert count_roots(4.0) == 1 and count_roots(25.0) == 1


def test_poisoned_corner_optional():
    assert len(steady_state_root(10.0, include_poisoned=True)) == 4
    with pytest.raises(ValueError):
        steady_state_root(-1.0)


def test_fold_scan_matches_cubic_root_count():
    folds = fold_scan(4.0, 20.0, n=33)
    assert len(folds) == 2
    np.testing.assert_allclose(folds, [5.044653, 16.990664], atol=2e-6)
    for f in folds:
        assert len(cubic_roots(f - 1e-4)) != len(cubic_roots(f + 1e-4))


def test_reference_trajectory_deterministic_limit():
    c0 = np.zeros((4, 3))
    c0[0] = [0.25, 0.45, 0.30]
    t, coeffs = reference_gpc_trajectory(c0, BetaSpec(b1=0.0), 3, 1.0)
    _, direct = integrate_coarse(c0[0], 6.0, (0.0, 1.0), out_every=10)
    assert t.size == 101 and coeffs.shape == (101, 4, 3)
    np.testing.assert_allclose(coeffs[:, 0], direct, atol=1e-14)
    assert np.abs(coeffs[:, 1:]).max() < 1e-14


def test_reference_trajectory_quadrature_converged():
    c0 = np.zeros((4, 3))
    c0[0] = [0.25, 0.45, 0.30]
    _, gl8 = reference_gpc_trajectory(c0, BetaSpec(), 3, 2.0, n_xi=8)
    _, gl16 = reference_gpc_trajectory(c0, BetaSpec(), 3, 2.0, n_xi=16)
    np.testing.assert_allclose(gl8, gl16, atol=1e-12)
    # the expansion reproduces node-wise solutions at an off-node xi
    xi = 0.3
    _, node = integrate_coarse(c0[0], BetaSpec()(xi), (0.0, 2.0), out_every=2000)
    assert np.abs(gpc.expand(gl16[-1], xi) - node[-1]).max() < 1e-6
