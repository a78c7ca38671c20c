#!/usr/bin/env python3
"""
Gauss-Legendre quadrature on [-1, 1].

Nodes x = cos(theta) are refined by Newton's method on P_m(cos(theta)) in
the angle, starting from theta = pi * (i - 0.25) / (m + 0.5), with P_m and
P_{m-1} from the three-term Legendre recurrence. At a root of P_m,
(1 - x^2) P_m'(x) = m P_{m-1}(x), so the weights are

    w = 2 sin(theta)^2 / (m P_{m-1}(x))^2

which never forms 1 - x^2 near the endpoints. Rules are cached per order
and their arrays are read-only.
"""

import functools
import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

import config
from deeppoly.errors import InvalidOrder, NonFiniteIntegrand

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return len(self.nodes)


def _legendre_pair(m: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(P_m(x), P_{m-1}(x)) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(2, m + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    return p, p_prev


@functools.lru_cache(maxsize=32)
def gauss_legendre(m: int = None) -> QuadratureRule:
    """Build (and cache) the m-point rule, nodes ascending.

    Raises:
        InvalidOrder: unless 1 <= m <= config.MAX_QUADRATURE_POINTS
    """
    if m is None:
        m = config.QUADRATURE_POINTS
    if isinstance(m, bool) or int(m) != m or not 1 <= m <= config.MAX_QUADRATURE_POINTS:
        raise InvalidOrder(f"Quadrature order must be an integer in [1, {config.MAX_QUADRATURE_POINTS}], got {m!r}")
    m = int(m)

    i = np.arange(1, m + 1)
    theta = np.pi * (i - 0.25) / (m + 0.5)
    for iteration in range(config.QUADRATURE_NEWTON_MAX_ITERS):
        x = np.cos(theta)
        p, p_prev = _legendre_pair(m, x)
        # d/dtheta P_m(cos theta) = -m (P_{m-1} - x P_m) / sin(theta)
        dtheta = p * np.sin(theta) / (m * (p_prev - x * p))
        theta = theta + dtheta
        if np.max(np.abs(dtheta)) <= config.QUADRATURE_NEWTON_TOL:
            break
    else:
        logger.warning(f"Gauss-Legendre nodes for m={m} did not reach tolerance")
    logger.debug(f"Gauss-Legendre m={m}: Newton finished after {iteration + 1} iterations")

    x = np.cos(theta)
    _, p_prev = _legendre_pair(m, x)
    sin_theta = np.sin(theta)
    w = 2.0 * sin_theta * sin_theta / (m * p_prev) ** 2

    order = np.argsort(x)
    x, w = x[order], w[order]
    # exact mirror symmetry: x_i = -x_{m-1-i}, w_i = w_{m-1-i}
    x = (x - x[::-1]) / 2.0
    w = (w + w[::-1]) / 2.0

    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w)


def weighted_sum(values: np.ndarray, rule: QuadratureRule) -> float:
    """sum_i w_i * values_i, in a fixed summation order."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteIntegrand("Integrand is not finite at every quadrature node")
    return float(np.sum(rule.weights * values))


def integrate(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """Approximate the integral of a vectorized f over [-1, 1].

    Raises:
        NonFiniteIntegrand: if f is NaN or infinite at a node
    """
    return weighted_sum(f(rule.nodes), rule)


def l2_error(f: Callable[[np.ndarray], np.ndarray], g: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """sqrt of the integral of (f - g)^2 over [-1, 1]."""
    residual = np.asarray(f(rule.nodes), dtype=float) - np.asarray(g(rule.nodes), dtype=float)
    return float(np.sqrt(weighted_sum(residual * residual, rule)))
