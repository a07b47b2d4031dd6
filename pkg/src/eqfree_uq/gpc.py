"""Legendre polynomial chaos on a scalar uniform random input.

All inner products use the probability density p(xi) = 1/2 on [-1, 1], so
``<P_i, P_i> = 1/(2i + 1)`` and Gauss-Legendre weights sum to one.

Coefficient arrays have shape ``(P + 1, 3)``: row ``i`` holds the order-``i``
coefficient of each coverage (A, B, vacant).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadratureRule",
    "legendre_eval",
    "legendre_table",
    "norm_sq",
    "gl_rule",
    "project_quadrature",
    "project_mc",
    "expand",
    "moments",
]


def legendre_eval(order: int, xi):
    """Legendre polynomial ``P_order`` at ``xi`` (scalar or array), ``P_i(1) = 1``."""
    if order < 0:
        raise ValueError("order must be non-negative")
    xi = np.asarray(xi, dtype=float)
    p_prev = np.ones_like(xi)
    if order == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = xi.copy()
    for n in range(1, order):
        p_prev, p = p, ((2 * n + 1) * xi * p - n * p_prev) / (n + 1)
    return p if p.ndim else float(p)


def legendre_table(max_order: int, xi) -> np.ndarray:
    """Rows ``P_0(xi) .. P_max_order(xi)``; shape ``(max_order + 1, len(xi))``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    table = np.empty((max_order + 1, xi.size))
    table[0] = 1.0
    if max_order >= 1:
        table[1] = xi
    for n in range(1, max_order):
        table[n + 1] = ((2 * n + 1) * xi * table[n] - n * table[n - 1]) / (n + 1)
    return table


def norm_sq(order: int) -> float:
    return 1.0 / (2 * order + 1)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.nodes.size


def _legendre_with_derivative(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gl_rule(n: int, tol: float = 1e-15, max_iter: int = 100) -> QuadratureRule:
    """n-point Gauss-Legendre rule normalised to the uniform probability measure.

    Nodes come from Newton iteration on the three-term recurrence, started
    from the usual cosine guesses; they are returned in ascending order.
    """
    if n < 1:
        raise ValueError("need at least one node")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.ones(1))
    m = (n + 1) // 2
    k = np.arange(1, m + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p, dp = _legendre_with_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= tol:
            break
    _, dp = _legendre_with_derivative(n, x)
    # 2 / ((1 - x^2) P_n'^2) halved for the probability measure
    w = 1.0 / ((1.0 - x * x) * dp * dp)
    nodes = np.concatenate([-x, x[::-1]])
    weights = np.concatenate([w, w[::-1]])
    if n % 2:
        # middle node counted twice above
        nodes = np.delete(nodes, m - 1)
        weights = np.delete(weights, m - 1)
        nodes[m - 1] = 0.0
    return QuadratureRule(nodes, weights)


def project_quadrature(values, rule: QuadratureRule, order: int) -> np.ndarray:
    """Quadrature projection of node values (shape ``(n, 3)``) onto ``P_0..P_order``."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(rule):
        raise ValueError(
            f"got {values.shape[0]} node values for a {len(rule)}-point rule"
        )
    if len(rule) < order + 1:
        raise ValueError("quadrature rule too small for the truncation order")
    table = legendre_table(order, rule.nodes)
    norms = np.array([norm_sq(i) for i in range(order + 1)])
    return (table * rule.weights) @ values / norms[:, None]


def project_mc(xi, values, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo projection from i.i.d. uniform samples.

    Normalises by the analytic norms. Returns ``(coeffs, stderr)``, both
    shaped ``(order + 1, 3)``.
    """
    xi = np.asarray(xi, dtype=float)
    values = np.asarray(values, dtype=float)
    ne = xi.size
    if values.shape[0] != ne:
        raise ValueError("sample count mismatch between xi and values")
    if ne < order + 1:
        raise ValueError(f"need at least {order + 1} samples, got {ne}")
    table = legendre_table(order, xi)
    norms = np.array([norm_sq(i) for i in range(order + 1)])
    terms = table[:, :, None] * values[None, :, :] / norms[:, None, None]
    coeffs = terms.mean(axis=1)
    stderr = terms.std(axis=1, ddof=1) / np.sqrt(ne) if ne > 1 else np.zeros_like(coeffs)
    return coeffs, stderr


def expand(coeffs, xi) -> np.ndarray:
    """Evaluate the expansion at ``xi``; scalar xi gives shape (3,), array gives (m, 3)."""
    coeffs = np.asarray(coeffs, dtype=float)
    scalar = np.ndim(xi) == 0
    table = legendre_table(coeffs.shape[0] - 1, xi)
    out = table.T @ coeffs
    return out[0] if scalar else out


def moments(coeffs) -> tuple[np.ndarray, np.ndarray]:
    coeffs = np.asarray(coeffs, dtype=float)
    norms = np.array([norm_sq(i) for i in range(coeffs.shape[0])])
    mean = coeffs[0].copy()
    var = (coeffs[1:] ** 2 * norms[1:, None]).sum(axis=0)
    return mean, var
