"""Coarse projective integration of gPC coefficients.

Each cycle lifts the current coefficients to coverage triples at the xi
points, evolves them with the inner engine for ``n_inner`` observation
intervals, restricts back to coefficients at every interval, fits a line to
the trailing ``fit_window`` restrictions and jumps ``dt_cc`` forward with
forward Euler.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bridge import EnsembleSpec, LiftingError, lift_gpc_to_coarse, restrict_coarse_to_gpc, xi_points
from .catalytic import BetaSpec

log = logging.getLogger(__name__)

__all__ = ["CpiConfig", "CpiRecord", "CpiTrajectory", "inner_burst", "slope_ls", "projective_step", "run_cpi"]

SIMULATED = "simulated"
PROJECTED = "projected"


@dataclass(frozen=True)
class CpiConfig:
    dt_c: float = 0.01
    n_inner: int = 40
    fit_window: int = 5
    dt_cc: float = 0.8
    t_end: float = 10.0
    order: int = 3
    residual_ratio: float = 0.1
    clamp_warn: float = 0.05
    clamp_fail: float = 0.2
    discard: int = 0  # burst samples never used by the fit, counted from the lift

    def __post_init__(self):
        if self.dt_c <= 0:
            raise ValueError("dt_c must be positive")
        if self.fit_window < 2:
            raise ValueError("fit_window must be at least 2")
        if self.discard < 0:
            raise ValueError("discard must be non-negative")
        if self.fit_window > self.n_inner + 1 - self.discard:
            raise ValueError("fit_window cannot exceed the burst samples left after discard")
        if self.dt_cc < 0:
            raise ValueError("dt_cc must be non-negative")
        if self.order < 0:
            raise ValueError("order must be non-negative")


@dataclass
class CpiRecord:
    t: float
    coeffs: np.ndarray
    segment: str


@dataclass
class CpiTrajectory:
    records: list[CpiRecord] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    aborted: str | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def coeffs(self) -> np.ndarray:
        return np.stack([r.coeffs for r in self.records]) if self.records else np.empty((0, 0, 3))

    @property
    def segments(self) -> list[str]:
        return [r.segment for r in self.records]


def inner_burst(coeffs0, t0: float, config: CpiConfig, ensemble: EnsembleSpec, beta_spec: BetaSpec,
                engine, seed: int = 0, burst: int = 0):
    """Lift once, evolve one continuous run, restrict at every observation time.

    Returns ``(times, coeffs, clamp)`` with ``coeffs`` shaped
    ``(n_inner + 1, order + 1, 3)``.
    """
    xis, rule = xi_points(ensemble.scheme, ensemble.n_xi, seed, burst)
    if rule is None and ensemble.n_xi < config.order + 1:
        raise ValueError("too few xi samples for the truncation order")
    states, clamp = lift_gpc_to_coarse(coeffs0, xis, config.clamp_warn, config.clamp_fail,
                                       clamp=getattr(engine, "needs_simplex", True))
    series = engine.evolve(states, beta_spec(xis), config.dt_c, config.n_inner, key=(burst,))
    coeffs = np.stack([restrict_coarse_to_gpc(xis, s, config.order, rule) for s in series])
    times = t0 + config.dt_c * np.arange(config.n_inner + 1)
    return times, coeffs, float(clamp.max())


def slope_ls(times, series) -> tuple[np.ndarray, np.ndarray]:
    """Ordinary least-squares slope of every coefficient entry.

    ``series`` has shape ``(k, ...)``. Returns ``(slope, residual)`` where
    ``residual`` is the root-sum-square of the fit residuals per entry.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if t.size < 2 or t.size != y.shape[0]:
        raise ValueError("need at least two samples with matching times")
    dt = t - t.mean()
    sxx = float(dt @ dt)
    if sxx <= 0 or np.unique(t).size != t.size:
        raise ValueError("degenerate sample times")
    ybar = y.mean(axis=0)
    slope = np.tensordot(dt, y - ybar, axes=(0, 0)) / sxx
    fitted = ybar + dt.reshape((-1,) + (1,) * (y.ndim - 1)) * slope
    residual = np.sqrt(((y - fitted) ** 2).sum(axis=0))
    return slope, residual


def projective_step(coeffs, slope, dt_cc: float) -> np.ndarray:
    return np.asarray(coeffs, dtype=float) + dt_cc * np.asarray(slope, dtype=float)


def run_cpi(config: CpiConfig, coeffs0, ensemble: EnsembleSpec, beta_spec: BetaSpec, engine,
            seed: int = 0) -> CpiTrajectory:
    """Alternate bursts and projective jumps until ``t_end``.

    The last jump is shortened so it lands on ``t_end``. A burst whose start
    state cannot be lifted ends the run; the partial trajectory is returned
    with ``aborted`` set.
    """
    traj = CpiTrajectory()
    if config.t_end <= 0:
        return traj
    coeffs = np.asarray(coeffs0, dtype=float)
    t = 0.0
    burst = 0
    eps = 1e-9 * config.dt_c
    while True:
        try:
            times, series, clamp = inner_burst(coeffs, t, config, ensemble, beta_spec, engine, seed, burst)
        except LiftingError as exc:
            traj.aborted = f"t={t:.6g}: {exc}"
            log.error("CPI aborted at %s", traj.aborted)
            return traj
        keep = times <= config.t_end + eps
        first = 0 if not traj.records else 1
        for k in range(first, int(keep.sum())):
            traj.records.append(CpiRecord(float(times[k]), series[k], SIMULATED))
        diag = {"burst": burst, "t_start": t, "clamp": clamp}
        t_burst_end = float(times[keep][-1])
        if t_burst_end >= config.t_end - eps or not keep[-1]:
            traj.diagnostics.append(diag)
            break
        w = config.fit_window
        slope, residual = slope_ls(times[-w:], series[-w:])
        span = times[-1] - times[-w]
        ratio = float(np.linalg.norm(residual) / max(np.linalg.norm(slope) * span, 1e-300))
        diag.update(slope_norm=float(np.linalg.norm(slope)), residual_norm=float(np.linalg.norm(residual)),
                    residual_ratio=ratio)
        if ratio > config.residual_ratio:
            log.warning("burst %d: fit residual ratio %.3g exceeds %.3g", burst, ratio, config.residual_ratio)
        traj.diagnostics.append(diag)
        jump = min(config.dt_cc, config.t_end - t_burst_end)
        coeffs = projective_step(series[-1], slope, jump)
        t = t_burst_end + jump
        if jump > 0:
            traj.records.append(CpiRecord(t, coeffs, PROJECTED))
        burst += 1
        if t >= config.t_end - eps:
            break
    return traj
