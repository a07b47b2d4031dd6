"""Gillespie direct-method simulation of well-mixed reaction networks.

Each event consumes two uniforms from the replica's generator, in this
order: ``p1 = rng.random()`` picks the channel and ``p2 = 1 - rng.random()``
(so ``p2`` lies in (0, 1]) sets the waiting time. The generic path and the
compiled catalytic kernel follow the same order and produce identical
trajectories for identical generators.

Snapshots are right-continuous: the state reported at time ``t`` is the state
after every event with event time <= ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numba
import numpy as np

__all__ = [
    "SystemExhausted",
    "ReactionNetwork",
    "FineState",
    "SampledRun",
    "select_reaction",
    "time_increment",
    "simulate_sampled",
    "simulate_catalytic",
]


class SystemExhausted(Exception):
    """All propensities are zero; no further event can fire."""


@dataclass(frozen=True)
class ReactionNetwork:
    stoichiometry: np.ndarray  # (n_reactions, n_species)
    propensity: Callable[[np.ndarray, Any], np.ndarray]
    params: Any = None
    conserved: bool = False

    @property
    def n_species(self) -> int:
        return self.stoichiometry.shape[1]

    def __post_init__(self):
        if self.conserved and np.any(self.stoichiometry.sum(axis=1) != 0):
            raise ValueError("declared conservation law violated by stoichiometry")


@dataclass
class FineState:
    counts: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ValueError("species counts must be non-negative")


@dataclass
class SampledRun:
    snapshots: list[FineState] = field(default_factory=list)
    frozen: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    n_events: int = 0


def select_reaction(rates, p1: float) -> int:
    """Index j with cum[j-1] <= p1 * total <= cum[j]; ties go to the lower index.

    Zero-rate channels are never selected, even on a tie at their boundary.
    """
    total = 0.0
    for r in rates:
        total += r
    if not total > 0.0:
        raise SystemExhausted("all propensities are zero")
    target = p1 * total
    cum = 0.0
    last = -1
    for j, r in enumerate(rates):
        if r <= 0.0:
            continue
        cum += r
        last = j
        if target <= cum:
            return j
    return last


def time_increment(rates, p2: float) -> float:
    """Exponential waiting time ``-ln(p2) / sum(rates)``, always strictly positive."""
    if not 0.0 < p2 <= 1.0:
        raise ValueError("p2 must lie in (0, 1]")
    total = 0.0
    for r in rates:
        total += r
    if not total > 0.0:
        raise SystemExhausted("all propensities are zero")
    dt = -math.log(p2) / total
    return dt if dt > 0.0 else np.nextafter(0.0, 1.0)


def _advance(t: float, dt: float) -> float:
    t_next = t + dt
    return t_next if t_next > t else np.nextafter(t, np.inf)


def simulate_sampled(
    state0: FineState,
    observation_times,
    network: ReactionNetwork,
    rng: np.random.Generator,
    params: Any = None,
) -> SampledRun:
    """Run one continuous trajectory and sample it at ``observation_times``.

    Pure-Python path for arbitrary networks. If the system exhausts before the
    last observation, the frozen state is repeated and flagged.
    """
    times = np.asarray(observation_times, dtype=float)
    run = SampledRun(frozen=np.zeros(times.size, dtype=bool))
    if times.size == 0:
        return run
    if times[0] < state0.t or np.any(np.diff(times) < 0):
        raise ValueError("observation times must be ascending and start at or after t0")
    params = network.params if params is None else params
    stoich = network.stoichiometry
    counts = state0.counts.copy()
    t = state0.t
    k = 0
    n_events = 0
    while k < times.size:
        rates = network.propensity(counts, params)
        p1 = rng.random()
        p2 = 1.0 - rng.random()
        try:
            j = select_reaction(rates, p1)
            t_next = _advance(t, time_increment(rates, p2))
        except SystemExhausted:
            while k < times.size:
                run.snapshots.append(FineState(counts.copy(), times[k]))
                run.frozen[k] = True
                k += 1
            break
        while k < times.size and times[k] < t_next:
            run.snapshots.append(FineState(counts.copy(), times[k]))
            k += 1
        if k == times.size:
            break
        counts += stoich[j]
        t = t_next
        n_events += 1
    run.n_events = n_events
    return run


@numba.njit(nogil=True, cache=True)
def _catalytic_kernel(counts0, t0, times, alpha, beta, gamma, k_r, n_tot, rng):
    m = times.size
    out = np.empty((m, 3), dtype=np.int64)
    frozen = np.zeros(m, dtype=np.bool_)
    n_a = counts0[0]
    n_b = counts0[1]
    n_s = counts0[2]
    t = t0
    k = 0
    n_events = 0
    rates = np.empty(4)
    while k < m:
        rates[0] = alpha * n_s
        rates[1] = 0.5 * (beta / n_tot) * (n_s * (n_s - 1))
        rates[2] = gamma * n_a
        rates[3] = (k_r / n_tot) * (n_a * n_b)
        p1 = rng.random()
        p2 = 1.0 - rng.random()
        total = 0.0
        for i in range(4):
            total += rates[i]
        if not total > 0.0:
            while k < m:
                out[k, 0] = n_a
                out[k, 1] = n_b
                out[k, 2] = n_s
                frozen[k] = True
                k += 1
            break
        target = p1 * total
        cum = 0.0
        j = -1
        for i in range(4):
            if rates[i] <= 0.0:
                continue
            cum += rates[i]
            j = i
            if target <= cum:
                break
        dt = -math.log(p2) / total
        if not dt > 0.0:
            dt = np.nextafter(0.0, 1.0)
        t_next = t + dt
        if not t_next > t:
            t_next = np.nextafter(t, np.inf)
        while k < m and times[k] < t_next:
            out[k, 0] = n_a
            out[k, 1] = n_b
            out[k, 2] = n_s
            k += 1
        if k == m:
            break
        if j == 0:
            n_a += 1
            n_s -= 1
        elif j == 1:
            n_b += 2
            n_s -= 2
        elif j == 2:
            n_a -= 1
            n_s += 1
        else:
            n_a -= 1
            n_b -= 1
            n_s += 2
        t = t_next
        n_events += 1
    return out, frozen, n_events


def simulate_catalytic(counts0, t0: float, observation_times, params, rng) -> tuple[np.ndarray, np.ndarray, int]:
    """Compiled trajectory sampler for the catalytic model.

    Returns ``(counts (m, 3), frozen (m,), n_events)``.
    """
    times = np.ascontiguousarray(observation_times, dtype=np.float64)
    if times.size and (times[0] < t0 or np.any(np.diff(times) < 0)):
        raise ValueError("observation times must be ascending and start at or after t0")
    counts0 = np.asarray(counts0, dtype=np.int64)
    return _catalytic_kernel(
        counts0, float(t0), times,
        float(params.alpha), float(params.beta), float(params.gamma), float(params.k_r),
        np.int64(params.n_tot), rng,
    )
