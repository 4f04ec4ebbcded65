"""Gauss-Legendre implicit Runge-Kutta tableaus for arbitrary stage count.

The q-stage Gauss-Legendre method collocates at the roots of the degree-q
Legendre polynomial shifted to (0,1) and reaches order 2q, so the stage count
can be pushed as high as the time step demands.  Coefficients come from

    c_j : shifted Legendre roots (Newton with Chebyshev starting points)
    b_j : Gauss quadrature weights on (0,1)
    a_ij: integral of the j-th Lagrange basis polynomial over [0, c_i]

The a_ij construction is the exact solution of the stage-order Vandermonde
systems sum_j a_ij c_j^(k-1) = c_i^k / k, evaluated stably through the
barycentric form (a naive linear solve loses all accuracy past q ~ 20).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = ["ButcherTableau", "gauss_legendre_tableau", "verify_order_conditions", "tableau_to_json"]

MAX_STAGES = 100

_NEWTON_TOL = 1e-14
_NEWTON_MAX_ITERS = 100


@dataclass(frozen=True)
class ButcherTableau:
    """Runge-Kutta coefficients; all entries are dimensionless fractions of dt."""

    q: int
    a: np.ndarray  # (q, q)
    b: np.ndarray  # (q,)
    c: np.ndarray  # (q,)


def _legendre_with_derivative(n: int, x: np.ndarray):
    """P_n(x) and P_n'(x) on [-1,1] by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def _gauss_nodes_weights(q: int):
    """Nodes/weights of q-point Gauss-Legendre quadrature on [-1,1]."""
    k = np.arange(1, q + 1)
    x = np.cos(np.pi * (k - 0.25) / (q + 0.5))  # Chebyshev starting points
    for _ in range(_NEWTON_MAX_ITERS):
        p, dp = _legendre_with_derivative(q, x)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    else:
        raise RuntimeError(f"Legendre root search did not converge for q={q}")
    _, dp = _legendre_with_derivative(q, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def gauss_legendre_tableau(q: int) -> ButcherTableau:
    """Build the q-stage Gauss-Legendre tableau, 1 <= q <= 100."""
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool):
        raise ValueError("stage count must be an integer")
    if not 1 <= q <= MAX_STAGES:
        raise ValueError(f"stage count must be in [1, {MAX_STAGES}], got {q}")

    x, w = _gauss_nodes_weights(q)
    c = 0.5 * (x + 1.0)
    b = 0.5 * w

    # barycentric weights of the nodes, scaled by the interval capacity
    # (|0-1|/4) so the partial products stay O(1) even at q = 100
    diffs = c[:, None] - c[None, :]
    np.fill_diagonal(diffs, 1.0)
    bary = 1.0 / np.prod(diffs / 0.25, axis=1)

    def lagrange_all(t: float) -> np.ndarray:
        d = t - c
        hit = np.abs(d) < 1e-14
        if hit.any():
            out = np.zeros(q)
            out[hit] = 1.0
            return out
        r = bary / d
        return r / r.sum()

    # a_ij = integral over [0, c_i] of the j-th Lagrange basis polynomial,
    # evaluated with the same q-point rule mapped onto [0, c_i] (exact: the
    # integrand has degree q-1 < 2q)
    a = np.zeros((q, q))
    for i in range(q):
        for m in range(q):
            a[i] += (c[i] * b[m]) * lagrange_all(c[i] * c[m])

    return ButcherTableau(q=q, a=a, b=b, c=c)


def verify_order_conditions(tableau: ButcherTableau, max_order: int) -> np.ndarray:
    """Residuals |sum_j b_j c_j^(k-1) - 1/k| for k = 1..max_order.

    Gauss-Legendre satisfies these quadrature conditions up to k = 2q.
    """
    b, c = tableau.b, tableau.c
    ks = np.arange(1, max_order + 1)
    moments = np.array([np.sum(b * c ** (k - 1)) for k in ks])
    return np.abs(moments - 1.0 / ks)


def tableau_to_json(tableau: ButcherTableau) -> str:
    return json.dumps(
        {
            "q": tableau.q,
            "a": tableau.a.tolist(),
            "b": tableau.b.tolist(),
            "c": tableau.c.tolist(),
        },
        indent=2,
    )
