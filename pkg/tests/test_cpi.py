import numpy as np
import pytest

from eqfree_uq.bridge import EnsembleSpec, OdeEngine
from eqfree_uq.catalytic import BetaSpec
from eqfree_uq.cpi import CpiConfig, inner_burst, projective_step, run_cpi, slope_ls
from eqfree_uq.oracle import reference_gpc_trajectory

C0 = np.zeros((4, 3))
C0[0] = [0.25, 0.45, 0.30]
ENS = EnsembleSpec("gl", 8, 1)


def test_slope_ls_exact_on_lines():
    t = np.array([0.0, 0.1, 0.2, 0.3])
    y = np.stack([2.0 * t + 1, -t], axis=1)
    slope, res = slope_ls(t, y)
    np.testing.assert_allclose(slope, [2.0, -1.0])
    np.testing.assert_allclose(res, 0.0, atol=1e-15)
    _, res2 = slope_ls(t, t**2)
    assert res2 > 0
    with pytest.raises(ValueError):
        slope_ls([0.0], [1.0])
    with pytest.raises(ValueError):
        slope_ls([0.0, 0.0], [1.0, 2.0])


def test_projective_step():
    np.testing.assert_allclose(projective_step(np.ones(3), np.array([1.0, 0.0, -1.0]), 0.5), [1.5, 1.0, 0.5])


def test_config_validation():
    with pytest.raises(ValueError):
        CpiConfig(dt_c=0)
    with pytest.raises(ValueError):
        CpiConfig(fit_window=1)
    with pytest.raises(ValueError):
        CpiConfig(n_inner=3, fit_window=5)
    with pytest.raises(ValueError):
        CpiConfig(dt_cc=-1)
    with pytest.raises(ValueError):
        CpiConfig(n_inner=6, fit_window=5, discard=3)
    CpiConfig(n_inner=6, fit_window=5, discard=2)


def test_inner_burst_shapes():
    times, coeffs, clamp = inner_burst(C0, 1.0, CpiConfig(), ENS, BetaSpec(), OdeEngine())
    assert times.shape == (41,) and coeffs.shape == (41, 4, 3)
    assert times[0] == 1.0 and times[-1] == pytest.approx(1.4)
    assert clamp == 0.0


def test_empty_horizon():
    traj = run_cpi(CpiConfig(t_end=0.0), C0, ENS, BetaSpec(), OdeEngine())
    assert traj.records == [] and traj.coeffs.shape == (0, 0, 3)


def test_record_layout_and_end_time():
    traj = run_cpi(CpiConfig(), C0, ENS, BetaSpec(), OdeEngine())
    t = traj.times
    assert t[0] == 0.0 and t[-1] == pytest.approx(10.0)
    assert np.all(np.diff(t) > 0)
    segs = traj.segments
    # bursts start at 0, 1.2, ..., 9.6; the last burst is cut at t_end
    assert segs.count("projected") == 8
    assert len(traj.diagnostics) == 9
    assert segs[0] == "simulated" and segs[41] == "projected"


def test_zero_jump_reproduces_reference():
    cfg = CpiConfig(dt_cc=0.0, t_end=1.2)
    traj = run_cpi(cfg, C0, ENS, BetaSpec(), OdeEngine())
    t_ref, ref = reference_gpc_trajectory(C0, BetaSpec(), 3, 1.2)
    idx = np.searchsorted(t_ref, traj.times - 1e-9)
    # each restart drops node-wise content above order 3; that closure error is tiny
    np.testing.assert_allclose(traj.coeffs, ref[idx], atol=1e-9)
    np.testing.assert_allclose(traj.coeffs[:41], ref[:41], atol=1e-14)


def test_error_shrinks_with_jump():
    t_ref, ref = reference_gpc_trajectory(C0, BetaSpec(), 3, 4.8)
    errs = []
    for dt_cc in (0.8, 0.4, 0.2):
        traj = run_cpi(CpiConfig(dt_cc=dt_cc, t_end=4.8), C0, ENS, BetaSpec(), OdeEngine())
        idx = np.rint(traj.times / 0.01).astype(int)
        errs.append(np.abs(traj.coeffs - ref[idx]).max())
    assert errs[0] > errs[1] > errs[2]


def test_unliftable_start_aborts():
    bad = C0.copy()
    bad[1] = [0.0, 0.6, -0.6]
    traj = run_cpi(CpiConfig(), bad, ENS, BetaSpec(), OdeEngine())
    assert traj.aborted and traj.records == []
