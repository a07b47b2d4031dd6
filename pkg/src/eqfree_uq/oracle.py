"""Reference solutions computed from the mean-field coverage equations.

These never touch the stochastic simulator: fixed-step RK4 for transients,
node-wise integration plus projection for reference gPC trajectories, and a
grid scan with Newton polish for steady states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import gpc
from .catalytic import BetaSpec, KineticParams, coarse_jacobian, coarse_rhs

__all__ = [
    "SteadyState",
    "rk4_series",
    "integrate_coarse",
    "reference_gpc_trajectory",
    "steady_state_root",
    "count_roots",
    "fold_scan",
]


@numba.njit(cache=True)
def _rhs(a, b, s, beta, alpha, gamma, k_r):
    react = k_r * a * b
    da = alpha * s - gamma * a - react
    db = beta * s * s - react
    return da, db, -(da + db)


@numba.njit(cache=True)
def _rk4_series(theta0, betas, dt, steps_per_out, n_out, alpha, gamma, k_r):
    m = theta0.shape[0]
    out = np.empty((n_out + 1, m, 3))
    for i in range(m):
        a = theta0[i, 0]
        b = theta0[i, 1]
        s = theta0[i, 2]
        beta = betas[i]
        out[0, i, 0] = a
        out[0, i, 1] = b
        out[0, i, 2] = s
        h = 0.5 * dt
        for k in range(n_out):
            for _ in range(steps_per_out):
                k1a, k1b, k1s = _rhs(a, b, s, beta, alpha, gamma, k_r)
                k2a, k2b, k2s = _rhs(a + h * k1a, b + h * k1b, s + h * k1s, beta, alpha, gamma, k_r)
                k3a, k3b, k3s = _rhs(a + h * k2a, b + h * k2b, s + h * k2s, beta, alpha, gamma, k_r)
                k4a, k4b, k4s = _rhs(a + dt * k3a, b + dt * k3b, s + dt * k3s, beta, alpha, gamma, k_r)
                a += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
                b += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
                s += dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
            out[k + 1, i, 0] = a
            out[k + 1, i, 1] = b
            out[k + 1, i, 2] = s
    return out


def steps_for(interval: float, dt: float) -> int:
    """Whole number of RK4 steps covering ``interval``; rejects non-multiples."""
    n = int(round(interval / dt))
    if n < 1 or abs(n * dt - interval) > 1e-9 * max(1.0, interval):
        raise ValueError(f"interval {interval} is not a whole multiple of dt={dt}")
    return n


def rk4_series(theta0, betas, dt: float, steps_per_out: int, n_out: int,
               params: KineticParams = KineticParams()) -> np.ndarray:
    """Integrate ``m`` independent coverage triples; returns ``(n_out + 1, m, 3)``."""
    theta0 = np.ascontiguousarray(np.atleast_2d(theta0), dtype=float)
    betas = np.ascontiguousarray(np.broadcast_to(np.asarray(betas, dtype=float), theta0.shape[:1]))
    return _rk4_series(theta0, betas, float(dt), int(steps_per_out), int(n_out),
                       float(params.alpha), float(params.gamma), float(params.k_r))


def integrate_coarse(theta0, beta: float, t_span, dt: float = 1e-3,
                     params: KineticParams = KineticParams(), out_every: int = 1):
    """Classical RK4 on the coverage equations.

    Returns ``(times, states)`` with a state recorded every ``out_every`` steps.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0, t1 = map(float, t_span)
    n_steps = steps_for(t1 - t0, dt) if t1 > t0 else 0
    n_out = n_steps // out_every
    traj = rk4_series(np.asarray(theta0, dtype=float)[None, :], beta, dt, out_every, n_out, params)[:, 0]
    times = t0 + dt * out_every * np.arange(n_out + 1)
    return times, traj


def reference_gpc_trajectory(coeffs0, beta_spec: BetaSpec, order: int, t_end: float,
                             dt_out: float = 0.01, dt: float = 1e-3, scheme: str = "gl",
                             n_xi: int = 8, seed: int = 0,
                             params: KineticParams = KineticParams()):
    """gPC coefficients of the node-wise coverage trajectories.

    ``scheme`` is ``"gl"`` (Gauss-Legendre nodes) or ``"mc"`` (``n_xi``
    uniform samples drawn from ``seed``). Returns ``(times, coeffs)`` with
    ``coeffs`` of shape ``(len(times), order + 1, 3)``.
    """
    from .bridge import xi_points

    xis, rule = xi_points(scheme, n_xi, seed)
    theta0 = gpc.expand(coeffs0, xis)
    n_out = int(round(t_end / dt_out))
    series = rk4_series(theta0, beta_spec(xis), dt, steps_for(dt_out, dt), n_out, params)
    if rule is not None:
        coeffs = np.stack([gpc.project_quadrature(x, rule, order) for x in series])
    else:
        coeffs = np.stack([gpc.project_mc(xis, x, order)[0] for x in series])
    return dt_out * np.arange(n_out + 1), coeffs


@dataclass(frozen=True)
class SteadyState:
    theta: np.ndarray
    stable: bool
    eigenvalues: np.ndarray


def _polish(a: float, b: float, beta: float, params: KineticParams, max_iter: int = 60):
    x = np.array([a, b])
    for _ in range(max_iter):
        theta = np.array([x[0], x[1], 1.0 - x[0] - x[1]])
        f = coarse_rhs(theta, beta, params)[:2]
        if np.max(np.abs(f)) <= 1e-15:
            break
        try:
            step = np.linalg.solve(coarse_jacobian(theta, beta, params), f)
        except np.linalg.LinAlgError:
            return None
        x = x - step
        if not np.all(np.isfinite(x)):
            return None
    return np.array([x[0], x[1], 1.0 - x[0] - x[1]])


def steady_state_root(beta: float, params: KineticParams = KineticParams(),
                      resolution: int = 400, include_poisoned: bool = False,
                      dedup: float = 1e-6) -> list[SteadyState]:
    """All steady states of the coverage equations inside the simplex.

    Seeds are local minima of the residual norm on a ``resolution`` squared
    grid over (theta_A, theta_B), each polished by Newton. The B-poisoned
    corner (0, 1, 0) is a root for every beta; it is dropped unless
    ``include_poisoned`` is set. Sorted by decreasing theta_A.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    g = np.linspace(0.0, 1.0, resolution + 1)
    a, b = np.meshgrid(g, g, indexing="ij")
    s = 1.0 - a - b
    inside = s >= -1e-12
    res = np.linalg.norm(coarse_rhs(np.stack([a, b, s], axis=-1), beta, params)[..., :2], axis=-1)
    res = np.where(inside, res, np.inf)
    padded = np.pad(res, 1, constant_values=np.inf)
    is_min = inside.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            shifted = padded[1 + di: 1 + di + res.shape[0], 1 + dj: 1 + dj + res.shape[1]]
            is_min &= res <= shifted
    roots: list[np.ndarray] = []
    for i, j in zip(*np.nonzero(is_min)):
        theta = _polish(g[i], g[j], beta, params)
        if theta is None or np.min(theta) < -1e-12:
            continue
        if np.max(np.abs(coarse_rhs(theta, beta, params))) > 1e-12:
            continue
        if not include_poisoned and theta[2] < 1e-9 and theta[0] < 1e-9:
            continue
        if any(np.max(np.abs(theta - r)) < dedup for r in roots):
            continue
        roots.append(np.clip(theta, 0.0, 1.0))
    roots.sort(key=lambda th: -th[0])
    out = []
    for theta in roots:
        eig = np.linalg.eigvals(coarse_jacobian(theta, beta, params))
        out.append(SteadyState(theta, bool(np.all(eig.real < 0)), eig))
    return out


def count_roots(beta: float, params: KineticParams = KineticParams(), resolution: int = 400) -> int:
    return len(steady_state_root(beta, params, resolution))


def fold_scan(beta_lo: float, beta_hi: float, n: int = 200,
              params: KineticParams = KineticParams(), tol: float = 1e-6) -> list[float]:
    """Values of beta where the number of interior steady states changes.

    Coarse scan over ``n`` grid points, each bracket refined by bisection.
    """
    betas = np.linspace(beta_lo, beta_hi, n)
    counts = [count_roots(b, params) for b in betas]
    folds = []
    for k in range(n - 1):
        if counts[k] == counts[k + 1]:
            continue
        lo, hi, c_lo = betas[k], betas[k + 1], counts[k]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if count_roots(mid, params) == c_lo:
                lo = mid
            else:
                hi = mid
        folds.append(0.5 * (lo + hi))
    return folds
