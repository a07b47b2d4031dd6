"""Lifting and restriction across the two scale gaps.

gPC coefficients <-> coverage triples at a set of xi points, and coverage
triple <-> integer site counts of ``R`` SSA replicas. The inner engines that
evolve a batch of coverage triples live here too, so the CPI driver and the
fixed-point solver can swap the SSA for the mean-field equations.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gpc
from .catalytic import KineticParams
from .oracle import rk4_series, steps_for
from .rng import stream
from .ssa import FineState, simulate_catalytic

log = logging.getLogger(__name__)

__all__ = [
    "LiftingError",
    "EnsembleSpec",
    "xi_points",
    "lift_gpc_to_coarse",
    "lift_coarse_to_fine",
    "restrict_fine_to_coarse",
    "restrict_coarse_to_gpc",
    "OdeEngine",
    "SsaEngine",
]

# spawn-key prefixes keep xi sampling and replica streams apart
XI_STREAM = 0
REPLICA_STREAM = 1


class LiftingError(ValueError):
    """Expanded coefficients are too far outside the simplex to lift."""


@dataclass(frozen=True)
class EnsembleSpec:
    scheme: str = "gl"  # "gl" or "mc"
    n_xi: int = 8
    replicas: int = 100
    n_tot: int = 10_000
    lifting: str = "multinomial"  # or "round"

    def __post_init__(self):
        if self.scheme not in ("gl", "mc"):
            raise ValueError(f"unknown xi scheme {self.scheme!r}")
        if self.lifting not in ("multinomial", "round"):
            raise ValueError(f"unknown lifting policy {self.lifting!r}")
        if self.replicas < 1 or self.n_xi < 1 or self.n_tot < 2:
            raise ValueError("replicas, n_xi must be >= 1 and n_tot >= 2")


def xi_points(scheme: str, n_xi: int, seed: int = 0, burst: int = 0):
    """Return ``(xis, rule)``; ``rule`` is None for Monte-Carlo samples."""
    if scheme == "gl":
        rule = gpc.gl_rule(n_xi)
        return rule.nodes, rule
    if scheme == "mc":
        return stream(seed, XI_STREAM, burst).uniform(-1.0, 1.0, n_xi), None
    raise ValueError(f"unknown xi scheme {scheme!r}")


def lift_gpc_to_coarse(coeffs, xis, warn_at: float = 0.05, fail_at: float = 0.2, clamp: bool = True):
    """Expand at each xi and push the result onto the simplex.

    Negative components are set to zero and the triple renormalised. Returns
    ``(states, clamp)`` where ``clamp[k]`` is the largest negative part at
    point ``k``. With ``clamp=False`` negative parts are kept and only the
    renormalisation is applied, which keeps the map smooth for engines that
    accept any real coverage triple; the thresholds still apply.
    """
    raw = np.atleast_2d(gpc.expand(coeffs, np.atleast_1d(xis)))
    negative = np.maximum(-raw, 0.0).max(axis=1)
    worst = float(negative.max()) if negative.size else 0.0
    if worst > fail_at:
        raise LiftingError(f"expansion leaves the simplex by {worst:.3g} (limit {fail_at})")
    if worst > warn_at:
        log.warning("lifting met a negative coverage of %.3g", worst)
    states = np.maximum(raw, 0.0) if clamp else raw
    total = states.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise LiftingError("expanded coverages vanish at some xi")
    return states / total, negative


def _largest_remainder(theta, n_tot: int) -> np.ndarray:
    exact = np.asarray(theta, dtype=float) * n_tot
    counts = np.floor(exact).astype(np.int64)
    short = n_tot - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def lift_coarse_to_fine(theta, n_tot: int, replicas: int, rng=None, policy: str = "multinomial") -> np.ndarray:
    """``replicas`` integer site-count triples consistent with ``theta``.

    ``rng`` is one generator shared by all replicas, or a sequence with one
    generator per replica. Returns an int64 array of shape ``(replicas, 3)``.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or abs(theta.sum() - 1.0) > 1e-12:
        raise ValueError("theta must lie on the simplex")
    if policy == "round":
        return np.tile(_largest_remainder(theta, n_tot), (replicas, 1))
    if policy != "multinomial":
        raise ValueError(f"unknown lifting policy {policy!r}")
    p = theta / theta.sum()
    if isinstance(rng, np.random.Generator):
        return rng.multinomial(n_tot, p, size=replicas).astype(np.int64)
    rngs = list(rng)
    if len(rngs) != replicas:
        raise ValueError("need one generator per replica")
    return np.array([g.multinomial(n_tot, p) for g in rngs], dtype=np.int64)


def restrict_fine_to_coarse(states, n_tot: int | None = None) -> np.ndarray:
    """Average coverage over replicas; exact integer sums, then one division."""
    if len(states) and isinstance(states[0], FineState):
        states = [s.counts for s in states]
    counts = np.asarray(states, dtype=np.int64).reshape(-1, 3)
    if counts.shape[0] == 0:
        raise ValueError("need at least one replica")
    totals = counts.sum(axis=1)
    if np.any(totals != totals[0]) or (n_tot is not None and totals[0] != n_tot):
        raise ValueError("replicas disagree on the total number of sites")
    return counts.sum(axis=0) / (counts.shape[0] * int(totals[0]))


def restrict_coarse_to_gpc(xis, states, order: int, rule: gpc.QuadratureRule | None = None) -> np.ndarray:
    if rule is not None:
        return gpc.project_quadrature(states, rule, order)
    return gpc.project_mc(xis, states, order)[0]


@dataclass
class OdeEngine:
    """Mean-field inner engine: RK4 on the coverage equations at each xi."""

    params: KineticParams = field(default_factory=KineticParams)
    dt: float = 1e-3
    stochastic = False
    needs_simplex = False

    def evolve(self, thetas, betas, dt_out: float, n_out: int, key=()) -> np.ndarray:
        if n_out == 0:
            return np.asarray(thetas, dtype=float)[None].copy()
        return rk4_series(thetas, betas, self.dt, steps_for(dt_out, self.dt), n_out, self.params)


@dataclass
class SsaEngine:
    """Stochastic inner engine: ``replicas`` lifted SSA runs per xi point.

    Replica ``r`` at point ``i`` draws its lifting and its events from the
    stream ``(master_seed, 1, *key, i, r)``, so results are independent of the
    worker count.
    """

    params: KineticParams = field(default_factory=KineticParams)
    replicas: int = 100
    master_seed: int = 0
    workers: int = 1
    lifting: str = "multinomial"
    stochastic = True
    needs_simplex = True
    n_frozen: int = 0
    n_events: int = 0

    @classmethod
    def from_spec(cls, spec: EnsembleSpec, params: KineticParams, master_seed: int, workers: int = 1):
        return cls(
            params=KineticParams(params.alpha, params.beta, params.gamma, params.k_r, spec.n_tot),
            replicas=spec.replicas, master_seed=master_seed, workers=workers, lifting=spec.lifting,
        )

    def _node(self, i: int, theta, beta: float, times, key):
        params = self.params.with_beta(beta)
        n_tot = params.n_tot
        total = np.zeros((times.size, 3), dtype=np.int64)
        frozen = 0
        events = 0
        if self.lifting == "round":
            base = lift_coarse_to_fine(theta, n_tot, 1, policy="round")[0]
        for r in range(self.replicas):
            g = stream(self.master_seed, REPLICA_STREAM, *key, i, r)
            counts0 = base if self.lifting == "round" else g.multinomial(n_tot, theta).astype(np.int64)
            out, frz, nev = simulate_catalytic(counts0, 0.0, times, params, g)
            total += out
            frozen += int(frz[-1]) if frz.size else 0
            events += nev
        return total / (self.replicas * n_tot), frozen, events

    def evolve(self, thetas, betas, dt_out: float, n_out: int, key=()) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        betas = np.broadcast_to(np.asarray(betas, dtype=float), thetas.shape[:1])
        times = dt_out * np.arange(n_out + 1)
        jobs = [(i, thetas[i] / thetas[i].sum(), float(betas[i]), times, tuple(key)) for i in range(len(thetas))]
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(lambda a: self._node(*a), jobs))
        else:
            results = [self._node(*a) for a in jobs]
        series = np.stack([r[0] for r in results], axis=1)
        self.n_frozen += sum(r[1] for r in results)
        self.n_events += sum(r[2] for r in results)
        return series
