"""Random steady states as fixed points of the coarse time-stepper.

``phi_T`` lifts gPC coefficients to coverage triples at the xi points,
evolves them for ``T`` with the inner engine and restricts back. Fixed points
are found with a damped Jacobian-free Newton-GMRES iteration and traced in the
mean of beta by pseudo-arclength continuation. With the SSA engine every
evaluation reuses the same random streams, which makes ``phi_T`` a
deterministic map.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import gpc
from .bridge import EnsembleSpec, LiftingError, lift_gpc_to_coarse, restrict_coarse_to_gpc, xi_points
from .catalytic import BetaSpec

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceError",
    "FixedPointProblem",
    "GmresReport",
    "NewtonReport",
    "BranchPoint",
    "Branch",
    "phi_T",
    "residual",
    "jvp",
    "gmres",
    "newton_krylov",
    "solve_fixed_point",
    "dominant_multiplier",
    "continuation",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


@dataclass(frozen=True)
class FixedPointProblem:
    engine: object
    ensemble: EnsembleSpec
    beta_spec: BetaSpec
    T: float = 0.4
    order: int = 3
    seed: int = 0
    clamp_warn: float = 0.05
    clamp_fail: float = 0.2
    eps0: float | None = None
    tol: float | None = None

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be non-negative")

    @property
    def size(self) -> int:
        return 3 * (self.order + 1)

    @property
    def stochastic(self) -> bool:
        return bool(getattr(self.engine, "stochastic", False))

    @property
    def fd_eps(self) -> float:
        if self.eps0 is not None:
            return self.eps0
        return 1e-3 if self.stochastic else 1e-6

    def with_center(self, value: float) -> "FixedPointProblem":
        return replace(self, beta_spec=self.beta_spec.with_center(value))


def phi_T(coeffs, problem: FixedPointProblem) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float).reshape(problem.order + 1, 3)
    ens = problem.ensemble
    xis, rule = xi_points(ens.scheme, ens.n_xi, problem.seed, 0)
    states, _ = lift_gpc_to_coarse(coeffs, xis, problem.clamp_warn, problem.clamp_fail,
                                   clamp=getattr(problem.engine, "needs_simplex", True))
    if problem.T > 0:
        states = problem.engine.evolve(states, problem.beta_spec(xis), problem.T, 1, key=(0,))[-1]
    return restrict_coarse_to_gpc(xis, states, problem.order, rule)


def residual(coeffs, problem: FixedPointProblem) -> np.ndarray:
    x = np.asarray(coeffs, dtype=float).ravel()
    return x - phi_T(x, problem).ravel()


def jvp(F: Callable, x, v, eps0: float = 1e-6, fx=None) -> np.ndarray:
    """Forward-difference derivative of ``F`` at ``x`` along the unit vector ``v/|v|``.

    The step is ``eps0 * (1 + |x|)``. If the perturbed point cannot be lifted
    the step is shrunk tenfold once before giving up.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("direction must be non-zero")
    vh = v / nv
    fx = F(x) if fx is None else fx
    eps = eps0 * (1.0 + np.linalg.norm(x))
    try:
        f1 = F(x + eps * vh)
    except LiftingError:
        eps *= 0.1
        f1 = F(x + eps * vh)
    return (f1 - fx) / eps


@dataclass
class GmresReport:
    converged: bool
    iterations: int
    residuals: list[float] = field(default_factory=list)
    stagnated: bool = False
    breakdown: bool = False


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    if abs(b) > abs(a):
        t = a / b
        s = 1.0 / np.sqrt(1.0 + t * t)
        return t * s, s
    t = b / a
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c


def gmres(apply: Callable, rhs, tol: float = 1e-10, max_iter: int | None = None,
          restart: int | None = None, x0=None) -> tuple[np.ndarray, GmresReport]:
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    ``tol`` is relative to ``|rhs|``. A zero subdiagonal with a non-singular
    Hessenberg block ends the solve as converged; a singular block, or running
    out of iterations, is reported as stagnation with the best iterate.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    max_iter = n if max_iter is None else max_iter
    restart = min(n, max_iter) if restart is None else restart
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    bnorm = np.linalg.norm(b)
    report = GmresReport(converged=False, iterations=0)
    if bnorm == 0:
        report.converged = True
        report.residuals.append(0.0)
        return np.zeros(n), report
    target = tol * bnorm
    r = b - apply(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    report.residuals.append(beta)
    while report.iterations < max_iter:
        if beta <= target:
            report.converged = True
            return x, report
        m = min(restart, max_iter - report.iterations)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        singular = False
        happy = False
        for j in range(m):
            w = apply(V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                hi = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = hi
            sub = H[j + 1, j]
            cs[j], sn[j] = _givens(H[j, j], sub)
            H[j, j] = cs[j] * H[j, j] + sn[j] * sub
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            report.iterations += 1
            if abs(H[j, j]) <= 1e-14 * max(1.0, np.abs(H[: j + 1, : j + 1]).max()):
                singular = True
                break
            k_used = j + 1
            report.residuals.append(abs(g[j + 1]))
            if sub <= 1e-14 * bnorm:
                happy = True
                break
            if abs(g[j + 1]) <= target:
                break
            V[j + 1] = w / sub
        if k_used:
            y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
            x = x + V[:k_used].T @ y
        r = b - apply(x)
        beta = np.linalg.norm(r)
        if happy:
            report.breakdown = True
            report.converged = True
            return x, report
        if singular:
            report.breakdown = True
            report.stagnated = True
            report.converged = beta <= target
            return x, report
        if k_used == 0:
            break
    report.converged = beta <= target
    report.stagnated = not report.converged
    return x, report


@dataclass
class NewtonReport:
    converged: bool = False
    iterations: int = 0
    residual_norms: list[float] = field(default_factory=list)
    gmres_iterations: list[int] = field(default_factory=list)
    step_lengths: list[float] = field(default_factory=list)
    message: str = ""


def newton_krylov(F: Callable, x0, tol: float = 1e-8, max_iter: int = 30, eps0: float = 1e-6,
                  gmres_tol: float = 1e-8, max_kry: int | None = None, restart: int | None = None,
                  max_backtracks: int = 12, armijo: float = 1e-4) -> tuple[np.ndarray, NewtonReport]:
    """Damped Jacobian-free Newton iteration on ``F(x) = 0``.

    Converged when ``|F(x)|_inf <= tol``. Each step solves ``J s = -F`` with
    GMRES on finite-difference Jacobian-vector products, then backtracks by
    halving until ``|F|_2`` decreases by the Armijo factor.
    """
    x = np.asarray(x0, dtype=float).ravel().copy()
    report = NewtonReport()
    fx = F(x)
    for _ in range(max_iter + 1):
        fnorm_inf = float(np.max(np.abs(fx)))
        report.residual_norms.append(fnorm_inf)
        if fnorm_inf <= tol:
            report.converged = True
            report.message = "converged"
            return x, report
        if report.iterations == max_iter:
            break

        def apply(v, x=x, fx=fx):
            nv = np.linalg.norm(v)
            return nv * jvp(F, x, v, eps0, fx) if nv > 0 else np.zeros_like(v)

        step, grep = gmres(apply, -fx, gmres_tol, max_kry, restart)
        report.gmres_iterations.append(grep.iterations)
        f2 = np.linalg.norm(fx)
        lam = 1.0
        for _ in range(max_backtracks + 1):
            try:
                x_new = x + lam * step
                f_new = F(x_new)
                if np.linalg.norm(f_new) <= (1.0 - armijo * lam) * f2:
                    break
            except ValueError:  # includes LiftingError and parameters out of range
                pass
            lam *= 0.5
        else:
            report.message = "line search failed"
            raise ConvergenceError(report.message, x, report)
        report.step_lengths.append(lam)
        x, fx = x_new, f_new
        report.iterations += 1
    report.message = "maximum Newton iterations reached"
    raise ConvergenceError(report.message, x, report)


def default_tol(problem: FixedPointProblem, noise_floor: float | None = None) -> float:
    if problem.tol is not None:
        return problem.tol
    if problem.stochastic:
        if noise_floor is None:
            raise ValueError("stochastic problems need a measured noise floor or an explicit tol")
        return 3.0 * noise_floor
    return 1e-8


def noise_floor(coeffs, problem: FixedPointProblem, n_seeds: int = 8) -> float:
    """Largest per-entry standard deviation of ``phi_T`` across independent seeds."""
    outs = []
    for k in range(n_seeds):
        engine = replace(problem.engine, master_seed=problem.engine.master_seed + 1000 + k)
        outs.append(phi_T(coeffs, replace(problem, engine=engine, seed=problem.seed + 1000 + k)).ravel())
    return float(np.max(np.std(outs, axis=0, ddof=1)))


def solve_fixed_point(x0, problem: FixedPointProblem, tol: float | None = None, **kw):
    F = lambda x: residual(x, problem)  # noqa: E731
    tol = default_tol(problem) if tol is None else tol
    x, report = newton_krylov(F, np.asarray(x0, dtype=float).ravel(), tol=tol, eps0=problem.fd_eps, **kw)
    return x.reshape(problem.order + 1, 3), report


def dominant_multiplier(x, problem: FixedPointProblem, max_iter: int = 300, rtol: float = 1e-7,
                        seed: int = 12345) -> float:
    """Magnitude of the dominant eigenvalue of the linearised stepper at ``x``.

    Power iteration on ``v -> v - J_F v`` (``J_F v`` a residual JVP), with a
    Rayleigh-Ritz estimate over the orthonormalised iterates. The plain power
    quotient stalls when several multipliers are nearly equal (one per xi
    node); the Ritz values separate them and are exact once the iterates span
    the whole space.
    """
    x = np.asarray(x, dtype=float).ravel()
    F = lambda y: residual(y, problem)  # noqa: E731
    fx = F(x)
    n = x.size
    m = min(n, max_iter)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    v = np.random.default_rng(seed).standard_normal(n)
    V[0] = v / np.linalg.norm(v)
    mu = 0.0
    for j in range(m):
        w = V[j] - jvp(F, x, V[j], problem.fd_eps, fx)
        for i in range(j + 1):
            H[i, j] = w @ V[i]
            w = w - H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        mu_new = float(np.abs(np.linalg.eigvals(H[: j + 1, : j + 1])).max())
        if H[j + 1, j] <= 1e-12 * max(1.0, mu_new):
            return mu_new
        if j > 0 and abs(mu_new - mu) <= rtol * mu_new:
            return mu_new
        mu = mu_new
        V[j + 1] = w / H[j + 1, j]
    return mu


def classify(mu: float, dead_band: float = 1e-3) -> str:
    if mu > 1.0 + dead_band:
        return "unstable"
    if mu < 1.0 - dead_band:
        return "stable"
    return "neutral"


@dataclass
class BranchPoint:
    mean_beta: float
    coeffs: np.ndarray
    multiplier: float
    stability: str
    fold: bool = False
    ds: float = 0.0
    newton_iterations: int = 0
    residual: float = 0.0


@dataclass
class Branch:
    points: list[BranchPoint] = field(default_factory=list)
    folds: list[float] = field(default_factory=list)
    message: str = ""
    truncated: bool = False

    @property
    def mean_betas(self) -> np.ndarray:
        return np.array([p.mean_beta for p in self.points])


def _fold_estimate(s, p) -> float:
    """Turning value of ``p`` from a parabola through three (arclength, p) pairs."""
    a, b, c = np.polyfit(s, p, 2)
    if a == 0:
        return float(np.max(p) if b > 0 else np.min(p))
    s_star = -b / (2 * a)
    return float(np.polyval([a, b, c], s_star))


def _bordered_tangent(G: Callable, y, t_prev, eps0: float) -> np.ndarray:
    """Unit null vector of ``DG(y)`` oriented along ``t_prev``.

    Solves ``[DG; t_prev^T] tau = [0; 1]``; falls back to ``t_prev`` if the
    bordered system cannot be solved.
    """
    gy = G(y)

    def apply(v):
        nv = np.linalg.norm(v)
        if nv == 0:
            return np.zeros(v.size)
        return np.append(nv * jvp(G, y, v, eps0, gy), t_prev @ v)

    rhs = np.zeros(y.size)
    rhs[-1] = 1.0
    tau, rep = gmres(apply, rhs, 1e-10)
    norm = np.linalg.norm(tau)
    if not np.isfinite(norm) or norm == 0:
        return t_prev
    tau /= norm
    return tau if tau @ t_prev >= 0 else -tau


def continuation(problem: FixedPointProblem, x0, beta_range: tuple[float, float], ds0: float = 0.1,
                 ds_min: float = 1e-4, ds_max: float = 0.5, max_points: int = 400, direction: int = 1,
                 tol: float | None = None, p_scale: float = 1.0) -> Branch:
    """Pseudo-arclength continuation of fixed points in the mean of beta.

    ``x0`` must be a converged fixed point at ``problem.beta_spec.center``.
    The branch stops when beta leaves ``beta_range``, when ``max_points`` is
    reached, or when the coefficients can no longer be lifted. Any other
    corrector failure halves the step; below ``ds_min`` the branch is returned
    with ``truncated`` set.
    """
    tol = default_tol(problem) if tol is None else tol
    eps0 = problem.fd_eps
    n = problem.size
    lo, hi = beta_range

    def G(y):
        return residual(y[:n], problem.with_center(y[n] * p_scale))

    def point(y, ds, iters, res):
        prob = problem.with_center(y[n] * p_scale)
        mu = dominant_multiplier(y[:n], prob)
        return BranchPoint(float(y[n] * p_scale), y[:n].reshape(-1, 3).copy(), mu, classify(mu),
                           ds=ds, newton_iterations=iters, residual=res)

    p0 = problem.beta_spec.center / p_scale
    y = np.concatenate([np.asarray(x0, dtype=float).ravel(), [p0]])
    gy = G(y)

    # initial tangent from J_x dx = -F_p
    f_p = jvp(G, y, np.eye(n + 1)[n], eps0, gy)
    apply_x = lambda v: np.linalg.norm(v) * jvp(G, y, np.append(v, 0.0), eps0, gy) if np.any(v) else np.zeros(n)  # noqa: E731
    dx, _ = gmres(apply_x, -f_p, 1e-10)
    tangent = np.append(dx, 1.0)
    tangent *= direction / np.linalg.norm(tangent)

    branch = Branch()
    branch.points.append(point(y, 0.0, 0, float(np.max(np.abs(gy)))))
    arclength = [0.0]
    ds = ds0
    while len(branch.points) < max_points:
        y_pred = y + ds * tangent
        t_fixed = tangent.copy()

        def H(z, y_pred=y_pred, t_fixed=t_fixed):
            return np.append(G(z), t_fixed @ (z - y_pred))

        try:
            y_new, rep = newton_krylov(H, y_pred, tol=tol, max_iter=8, eps0=eps0)
        except (ConvergenceError, ValueError) as exc:
            ds *= 0.5
            if ds < ds_min:
                where = f"beta={y[n] * p_scale:.6g}"
                if isinstance(exc, LiftingError):
                    # the branch runs out of the region where coefficients can be lifted
                    branch.message = f"branch reaches the lifting limit at {where}: {exc}"
                else:
                    branch.truncated = True
                    branch.message = f"corrector failed below ds_min at {where}: {exc}"
                    log.warning(branch.message)
                break
            continue
        secant = y_new - y
        new_tangent = _bordered_tangent(G, y_new, tangent, eps0)
        if new_tangent @ tangent < 0:
            new_tangent = -new_tangent
        bp = point(y_new, ds, rep.iterations, rep.residual_norms[-1])
        arclength.append(arclength[-1] + np.linalg.norm(secant))
        if np.sign(new_tangent[n]) != np.sign(tangent[n]) and tangent[n] != 0:
            branch.points[-1].fold = True
            s3 = arclength[-3:]
            p3 = [q.mean_beta for q in branch.points[-2:]] + [bp.mean_beta]
            if len(s3) == 3:
                branch.folds.append(_fold_estimate(s3, p3))
            else:
                branch.folds.append(branch.points[-1].mean_beta)
        branch.points.append(bp)
        y, tangent = y_new, new_tangent
        if not lo <= bp.mean_beta <= hi:
            branch.message = "left parameter range"
            break
        if rep.iterations <= 3:
            ds = min(ds * 1.5, ds_max)
        elif rep.iterations >= 6:
            ds = max(ds * 0.5, ds_min)
    else:
        branch.message = "maximum number of points reached"
    return branch


def minmax_over_xi(coeffs, n_grid: int = 201) -> tuple[np.ndarray, np.ndarray]:
    vals = gpc.expand(coeffs, np.linspace(-1.0, 1.0, n_grid))
    return vals.min(axis=0), vals.max(axis=0)
