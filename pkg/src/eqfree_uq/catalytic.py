"""A + 1/2 B2 -> AB surface reaction on a finite well-mixed catalyst.

Species order everywhere is (A, B, vacant). Reactions, in order:

1. A(g) + *        -> A*            rate alpha * N_*
2. B2(g) + 2*      -> 2 B*          rate 0.5 * beta / N_tot * N_* (N_* - 1)
3. A*              -> A(g) + *      rate gamma * N_A
4. A* + B*         -> AB(g) + 2*    rate k_r / N_tot * N_A N_B
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ssa import ReactionNetwork

__all__ = [
    "KineticParams",
    "BetaSpec",
    "STOICHIOMETRY",
    "stoichiometry",
    "propensities",
    "coarse_rhs",
    "coarse_jacobian",
    "beta_from_xi",
    "network",
]

STOICHIOMETRY = np.array(
    [
        [1, 0, -1],
        [0, 2, -2],
        [-1, 0, 1],
        [-1, -1, 2],
    ],
    dtype=np.int64,
)
STOICHIOMETRY.setflags(write=False)


@dataclass(frozen=True)
class KineticParams:
    alpha: float = 1.6
    beta: float = 6.0
    gamma: float = 0.04
    k_r: float = 4.0
    n_tot: int = 200 * 200

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "k_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_tot < 2:
            raise ValueError("n_tot must be at least 2")

    def with_beta(self, beta: float) -> "KineticParams":
        return KineticParams(self.alpha, float(beta), self.gamma, self.k_r, self.n_tot)


@dataclass(frozen=True)
class BetaSpec:
    """Map from the uniform input xi in [-1, 1] to the B2 adsorption rate.

    ``affine``:   beta = b0 + b1 * xi
    ``relative``: beta = mean * (1 + rho * xi)
    """

    form: str = "affine"
    b0: float = 6.0
    b1: float = 0.25
    mean: float = 1.0
    rho: float = 0.05

    def __post_init__(self):
        if self.form not in ("affine", "relative"):
            raise ValueError(f"unknown beta form {self.form!r}")
        lo, hi = self(-1.0), self(1.0)
        if min(lo, hi) <= 0:
            raise ValueError(f"beta must stay positive on [-1, 1], got [{lo}, {hi}]")

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.form == "affine":
            out = self.b0 + self.b1 * xi
        else:
            out = self.mean * (1.0 + self.rho * xi)
        return out if out.ndim else float(out)

    @property
    def center(self) -> float:
        return self.b0 if self.form == "affine" else self.mean

    def with_center(self, value: float) -> "BetaSpec":
        """Same spread, shifted (affine) or rescaled (relative) to a new mean."""
        if self.form == "affine":
            return BetaSpec("affine", b0=float(value), b1=self.b1)
        return BetaSpec("relative", mean=float(value), rho=self.rho)


def beta_from_xi(xi, spec: BetaSpec):
    if np.any(np.abs(np.asarray(xi)) > 1.0):
        raise ValueError("xi must lie in [-1, 1]")
    return spec(xi)


def stoichiometry() -> np.ndarray:
    return STOICHIOMETRY.copy()


def propensities(counts, params: KineticParams) -> np.ndarray:
    n_a, n_b, n_s = (int(c) for c in counts)
    n_tot = params.n_tot
    return np.array(
        [
            params.alpha * n_s,
            0.5 * (params.beta / n_tot) * (n_s * (n_s - 1)),
            params.gamma * n_a,
            (params.k_r / n_tot) * (n_a * n_b),
        ]
    )


def coarse_rhs(theta, beta, params: KineticParams = KineticParams()) -> np.ndarray:
    """Mean-field coverage derivatives; broadcasts over leading axes of ``theta``."""
    theta = np.asarray(theta, dtype=float)
    a, b, s = theta[..., 0], theta[..., 1], theta[..., 2]
    react = params.k_r * a * b
    da = params.alpha * s - params.gamma * a - react
    db = beta * s * s - react
    return np.stack([da, db, -(da + db)], axis=-1)


def coarse_jacobian(theta, beta, params: KineticParams = KineticParams()) -> np.ndarray:
    """2x2 Jacobian in (theta_A, theta_B) with theta_* = 1 - theta_A - theta_B eliminated."""
    a, b, _ = np.asarray(theta, dtype=float)
    s = 1.0 - a - b
    al, ga, kr = params.alpha, params.gamma, params.k_r
    return np.array(
        [
            [-al - ga - kr * b, -al - kr * a],
            [-2.0 * beta * s - kr * b, -2.0 * beta * s - kr * a],
        ]
    )


def network(params: KineticParams) -> ReactionNetwork:
    return ReactionNetwork(
        stoichiometry=STOICHIOMETRY,
        propensity=propensities,
        params=params,
        conserved=True,
    )
