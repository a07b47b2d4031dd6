"""Command implementations shared by the CLI and the HTTP service.

Each ``run_*`` takes a resolved :class:`RunConfig` and returns a
:class:`JobResult` holding the CSV texts keyed by file name. Numerical
failures that leave useful partial output (an aborted CPI run, a truncated
branch) are returned with ``failure`` set rather than raised.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, gpc
from .bridge import OdeEngine, SsaEngine, REPLICA_STREAM
from .config import ConfigError, RunConfig, load_config
from .cpi import run_cpi
from .csvio import COMPONENTS, header_comment, to_csv
from .oracle import reference_gpc_trajectory, steady_state_root
from .rng import stream
from .ssa import simulate_catalytic
from .steady import (ConvergenceError, FixedPointProblem, continuation, dominant_multiplier, classify,
                     minmax_over_xi, noise_floor, solve_fixed_point)

log = logging.getLogger(__name__)

__all__ = ["COMMANDS", "JobResult", "NumericalFailure", "run", "run_config"]


class NumericalFailure(RuntimeError):
    """A solver failed and produced no usable output."""


@dataclass
class JobResult:
    command: str
    files: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    failure: str | None = None

    @property
    def exit_code(self) -> int:
        return 3 if self.failure else 0


def _comment(cfg: RunConfig, command: str) -> str:
    return header_comment(__version__, command, cfg.seed, cfg.config_hash)


def coeff_columns(order: int) -> list[str]:
    return [f"c{i}_{c}" for i in range(order + 1) for c in COMPONENTS]


def _engine(cfg: RunConfig):
    if cfg["run"]["engine"] == "ode":
        return OdeEngine(params=cfg.kinetics(), dt=cfg["reference"]["dt"])
    return SsaEngine.from_spec(cfg.ensemble(), cfg.kinetics(), cfg.seed, cfg.workers)


# --- ssa ------------------------------------------------------------------

def _replica(cfg: RunConfig, r: int, times, counts0_theta):
    params = cfg.kinetics()
    g = stream(cfg.seed, REPLICA_STREAM, 0, 0, r)
    counts0 = g.multinomial(params.n_tot, counts0_theta).astype(np.int64)
    out, frozen, n_events = simulate_catalytic(counts0, 0.0, times, params, g)
    return out, bool(frozen[-1]) if frozen.size else False, n_events


def run_ssa(cfg: RunConfig) -> JobResult:
    s = cfg["ssa"]
    params = cfg.kinetics()
    n_out = int(round(s["t_end"] / s["dt_out"]))
    times = s["dt_out"] * np.arange(n_out + 1)
    theta0 = np.asarray(s["theta0"], dtype=float)
    theta0 = theta0 / theta0.sum()
    R = s["replicas"]
    # integer moments keep the reduction exact and order independent
    total = np.zeros((times.size, 3), dtype=np.int64)
    total_sq = np.zeros((times.size, 3), dtype=object)
    frozen = 0
    events = 0
    reps = range(R)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = pool.map(lambda r: _replica(cfg, r, times, theta0), reps)
            results = list(results)
    else:
        results = [_replica(cfg, r, times, theta0) for r in reps]
    for out, frz, nev in results:
        total += out
        total_sq += out.astype(object) ** 2
        frozen += frz
        events += nev
    n = params.n_tot
    mean = total / (R * n)
    if R > 1:
        var_num = (R * total_sq - total.astype(object) ** 2)
        var = np.array([[float(v) for v in row] for row in var_num]) / (R * (R - 1) * float(n) ** 2)
        se = np.sqrt(np.maximum(var, 0.0) / R)
    else:
        se = np.full_like(mean, np.nan)
    cols = ["t", "theta_A", "theta_B", "theta_star", "se_A", "se_B", "se_star", "replicas"]
    rows = [[times[k], *mean[k], *se[k], R] for k in range(times.size)]
    res = JobResult("ssa")
    res.files["ssa.csv"] = to_csv(_comment(cfg, "ssa"), cols, rows)
    res.summary = {"replicas": R, "frozen_replicas": frozen, "events": events}
    return res


# --- cpi / reference ------------------------------------------------------

def _trajectory_rows(times, coeffs, segments):
    rows = []
    for t, c, seg in zip(times, coeffs, segments):
        mean, var = gpc.moments(c)
        rows.append([t, seg, *c.ravel(), *mean, *np.sqrt(np.maximum(var, 0.0))])
    return rows


def _trajectory_columns(order: int) -> list[str]:
    return (["t", "segment"] + coeff_columns(order)
            + [f"mean_{c}" for c in COMPONENTS] + [f"std_{c}" for c in COMPONENTS])


DIAG_COLUMNS = ["burst", "t_start", "clamp", "slope_norm", "residual_norm", "residual_ratio"]


def run_cpi_job(cfg: RunConfig) -> JobResult:
    config = cfg.cpi()
    engine = _engine(cfg)
    traj = run_cpi(config, cfg.coeffs0(), cfg.ensemble(), cfg.beta_spec(), engine, cfg.seed)
    comment = _comment(cfg, "cpi")
    res = JobResult("cpi")
    res.files["cpi.csv"] = to_csv(comment, _trajectory_columns(config.order),
                                  _trajectory_rows(traj.times, traj.coeffs, traj.segments))
    diag_rows = [[d["burst"], d["t_start"], d["clamp"], d.get("slope_norm", np.nan),
                  d.get("residual_norm", np.nan), d.get("residual_ratio", np.nan)] for d in traj.diagnostics]
    res.files["cpi_diagnostics.csv"] = to_csv(comment, DIAG_COLUMNS, diag_rows)
    res.summary = {"records": len(traj.records), "bursts": len(traj.diagnostics)}
    if isinstance(engine, SsaEngine):
        res.summary.update(events=engine.n_events, frozen_replicas=engine.n_frozen)
    if traj.aborted:
        res.failure = f"CPI aborted at {traj.aborted}"
    return res


def run_reference(cfg: RunConfig) -> JobResult:
    config = cfg.cpi()
    ens = cfg.ensemble()
    res = JobResult("reference")
    if config.t_end <= 0:
        times, coeffs = np.empty(0), np.empty((0, config.order + 1, 3))
    else:
        times, coeffs = reference_gpc_trajectory(
            cfg.coeffs0(), cfg.beta_spec(), config.order, config.t_end, dt_out=config.dt_c,
            dt=cfg["reference"]["dt"], scheme=ens.scheme, n_xi=ens.n_xi, seed=cfg.seed,
            params=cfg.kinetics())
    res.files["reference.csv"] = to_csv(_comment(cfg, "reference"), _trajectory_columns(config.order),
                                        _trajectory_rows(times, coeffs, ["reference"] * len(times)))
    return res


# --- fixed points and branches -------------------------------------------

def _problem(cfg: RunConfig) -> FixedPointProblem:
    fp = cfg["fixed_point"]
    lift = cfg["lifting"]
    return FixedPointProblem(_engine(cfg), cfg.ensemble(), cfg.beta_spec(), T=fp["T"],
                             order=cfg["gpc"]["order"], seed=cfg.seed, clamp_warn=lift["warn_at"],
                             clamp_fail=lift["fail_at"], eps0=fp["eps0"], tol=fp["tol"])


def initial_guess(cfg: RunConfig, problem: FixedPointProblem) -> np.ndarray:
    guess = cfg["fixed_point"]["guess"]
    if guess == "coeffs":
        return cfg.coeffs0()
    center = problem.beta_spec.center
    roots = steady_state_root(center, cfg.kinetics())
    pick = {"a_rich": 0, "b_rich": -1, "saddle": 1}[guess]
    if guess == "saddle" and len(roots) < 3:
        raise ConfigError(f"fixed_point.guess: no saddle state at beta={center:g}")
    x0 = np.zeros((problem.order + 1, 3))
    x0[0] = roots[pick].theta
    return x0


BRANCH_EXTRA = ["branch_point", "mean_beta", "stability", "multiplier", "fold"]


def _branch_columns(order: int) -> list[str]:
    return (BRANCH_EXTRA + coeff_columns(order) + [f"mean_{c}" for c in COMPONENTS]
            + [f"min_{c}" for c in COMPONENTS] + [f"max_{c}" for c in COMPONENTS])


def _branch_row(k: int, beta: float, stability: str, mu: float, fold: bool, coeffs) -> list:
    lo, hi = minmax_over_xi(coeffs)
    return [k, beta, stability, mu, fold, *coeffs.ravel(), *coeffs[0], *lo, *hi]


def _solve(cfg: RunConfig, problem: FixedPointProblem):
    x0 = initial_guess(cfg, problem)
    fp = cfg["fixed_point"]
    summary = {}
    tol = problem.tol
    if tol is None and problem.stochastic:
        floor = noise_floor(x0, problem, fp["noise_seeds"])
        tol = 3.0 * floor
        summary["noise_floor"] = floor
    try:
        x, rep = solve_fixed_point(x0, problem, tol=tol, max_iter=fp["max_iter"])
    except ConvergenceError as exc:
        raise NumericalFailure(f"Newton-Krylov did not converge: {exc}") from None
    except ValueError as exc:
        raise NumericalFailure(f"fixed-point iteration left the admissible region: {exc}") from None
    summary.update(newton_iterations=rep.iterations, residual=rep.residual_norms[-1], tol=tol)
    return x, summary


def run_fixed_point(cfg: RunConfig) -> JobResult:
    problem = _problem(cfg)
    x, summary = _solve(cfg, problem)
    mu = dominant_multiplier(x, problem)
    res = JobResult("fixed-point", summary=summary)
    res.summary["multiplier"] = mu
    row = _branch_row(0, problem.beta_spec.center, classify(mu), mu, False, x)
    res.files["fixed_point.csv"] = to_csv(_comment(cfg, "fixed-point"), _branch_columns(problem.order), [row])
    return res


def run_continuation(cfg: RunConfig) -> JobResult:
    problem = _problem(cfg)
    x, summary = _solve(cfg, problem)
    c = cfg["continuation"]
    branch = continuation(problem, x, (c["beta_min"], c["beta_max"]), ds0=c["ds0"], ds_min=c["ds_min"],
                          ds_max=c["ds_max"], max_points=c["max_points"], direction=c["direction"],
                          tol=summary["tol"])
    comment = _comment(cfg, "continuation")
    rows = [_branch_row(k, p.mean_beta, p.stability, p.multiplier, p.fold, p.coeffs)
            for k, p in enumerate(branch.points)]
    res = JobResult("continuation", summary=summary)
    res.files["continuation.csv"] = to_csv(comment, _branch_columns(problem.order), rows)
    res.files["continuation_folds.csv"] = to_csv(comment, ["fold", "mean_beta"],
                                                 [[k, b] for k, b in enumerate(branch.folds)])
    res.summary.update(points=len(branch.points), folds=list(branch.folds), message=branch.message)
    if branch.truncated:
        res.failure = branch.message
    return res


COMMANDS = {
    "ssa": run_ssa,
    "cpi": run_cpi_job,
    "fixed-point": run_fixed_point,
    "continuation": run_continuation,
    "reference": run_reference,
}


def run_config(command: str, cfg: RunConfig) -> JobResult:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        res = COMMANDS[command](cfg)
    except NumericalFailure as exc:
        res = JobResult(command, failure=str(exc))
    res.files["resolved.ini"] = cfg.to_ini()
    res.summary.setdefault("config_sha256", cfg.config_hash)
    res.summary.setdefault("seed", cfg.seed)
    return res


def run(command: str, config_text: str | None = None, seed: int | None = None,
        workers: int | None = None) -> JobResult:
    """Resolve ``config_text`` and run ``command``; raises ConfigError on bad input."""
    return run_config(command, load_config(config_text, seed, workers))
