#!/usr/bin/env python3
"""
Least-squares loss over composite polynomial coefficients.

    F(v) = 1/2 * sum_i w_i * (f(x_i) - g(x_i))^2

where g is the composite unpacked from the flat parameter vector v and
(x_i, w_i) is the Gauss-Legendre rule. The reported L2 error is sqrt(2F).

Packing (outer layer first): the outer layer's b_0..b_d, then for every
inner layer its free coefficients a_1..a_{e-1}. In normalized form the inner
constant term is 0 and the leading coefficient 1, both implicit. With
normalized=False every coefficient of every layer is free.

The gradient is the general chain rule. For layer j (0 = outermost) with
input y_j and coefficient k:

    dF/dc_{j,k} = -sum_i w_i * r_i * prod_{l<j} p_l'(y_l) * y_j**k

which for two layers reduces to -int r * p**k and -int r * q'(p) * x**k.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from deeppoly.errors import ConfigError, LengthMismatch
from deeppoly.polynomial import DeepPolynomial, Polynomial, degrees_of_freedom
from deeppoly.quadrature import QuadratureRule, gauss_legendre, weighted_sum
from deeppoly.targets import TargetSpec, eval_target

logger = logging.getLogger(__name__)


def free_indices(signature: Sequence[int], normalized: bool = True) -> List[List[int]]:
    """Free coefficient positions per layer, outermost first."""
    indices = []
    for j, mu in enumerate(signature):
        if normalized and j > 0:
            indices.append(list(range(1, mu - 1)))
        else:
            indices.append(list(range(mu)))
    return indices


def parameter_count(signature: Sequence[int], normalized: bool = True) -> int:
    if normalized:
        return degrees_of_freedom(signature)
    return sum(int(mu) for mu in signature)


def pack(g: DeepPolynomial, normalized: bool = True) -> np.ndarray:
    """Flatten a composite into its parameter vector."""
    values = []
    for layer, idx in zip(g.layers, free_indices(g.signature, normalized)):
        values.extend(layer.coeffs[k] for k in idx)
    return np.array(values, dtype=float)


def unpack(v: Sequence[float], signature: Sequence[int], normalized: bool = True) -> DeepPolynomial:
    """Rebuild the composite from a parameter vector.

    Raises:
        LengthMismatch: if len(v) does not match the signature
    """
    v = np.asarray(v, dtype=float)
    expected = parameter_count(signature, normalized)
    if v.ndim != 1 or len(v) != expected:
        raise LengthMismatch(f"Parameter vector has length {v.size}, signature {tuple(signature)} needs {expected}")
    layers = []
    pos = 0
    for j, (mu, idx) in enumerate(zip(signature, free_indices(signature, normalized))):
        coeffs = np.zeros(mu)
        if normalized and j > 0:
            coeffs[-1] = 1.0
        coeffs[idx] = v[pos:pos + len(idx)]
        pos += len(idx)
        layers.append(Polynomial(coeffs))
    return DeepPolynomial(tuple(layers), normalized=normalized)


@dataclass
class FitProblem:
    """A target, a layer signature and the quadrature rule defining F."""
    target: TargetSpec
    signature: Tuple[int, ...]
    rule: Optional[QuadratureRule] = None
    normalized: bool = True
    target_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.signature = tuple(int(mu) for mu in self.signature)
        if not self.signature:
            raise ConfigError("Signature needs at least one layer")
        if any(mu < 1 for mu in self.signature):
            raise ConfigError(f"Every layer needs at least one coefficient, got {self.signature}")
        if self.normalized and any(mu < 2 for mu in self.signature[1:]):
            raise ConfigError(f"Normalized inner layers need degree >= 1, got {self.signature}")
        if self.rule is None:
            self.rule = gauss_legendre()
        self.target_values = np.asarray(eval_target(self.target, self.rule.nodes), dtype=float)
        if self.dof < 1:
            raise ConfigError(f"Signature {self.signature} has no free parameters")

    @property
    def dof(self) -> int:
        return parameter_count(self.signature, self.normalized)

    @property
    def depth(self) -> int:
        return len(self.signature)

    def pack(self, g: DeepPolynomial) -> np.ndarray:
        return pack(g, self.normalized)

    def unpack(self, v) -> DeepPolynomial:
        return unpack(v, self.signature, self.normalized)

    def loss(self, v) -> float:
        return loss(v, self)

    def gradient(self, v) -> np.ndarray:
        return gradient(v, self)

    def loss_and_gradient(self, v) -> Tuple[float, np.ndarray]:
        return loss_and_gradient(v, self)

    def describe(self) -> dict:
        return {
            'target': self.target.describe(),
            'signature': list(self.signature),
            'quadrature_points': self.rule.m,
            'normalized': self.normalized,
            'dof': self.dof,
        }


def _forward(v, prob: FitProblem):
    g = prob.unpack(v)
    inputs = [None] * g.depth
    value = prob.rule.nodes
    for j in range(g.depth - 1, -1, -1):
        inputs[j] = value
        value = npoly.polyval(value, g.layers[j].as_array())
    residual = prob.target_values - value
    return g, inputs, residual


def loss(v, prob: FitProblem) -> float:
    """F(v) = 1/2 * sum w * (f - g)^2.

    Raises:
        LengthMismatch: if len(v) != prob.dof
    """
    _, _, residual = _forward(v, prob)
    return 0.5 * weighted_sum(residual * residual, prob.rule)


def loss_and_gradient(v, prob: FitProblem) -> Tuple[float, np.ndarray]:
    """Loss and analytic gradient from a single forward pass."""
    g, inputs, residual = _forward(v, prob)
    value = 0.5 * weighted_sum(residual * residual, prob.rule)

    weighted = prob.rule.weights * residual
    chain = np.ones_like(residual)
    parts = []
    for j, idx in enumerate(free_indices(prob.signature, prob.normalized)):
        y = inputs[j]
        layer = g.layers[j]
        if idx:
            vander = np.vander(y, len(layer.coeffs), increasing=True)[:, idx]
            parts.append(-np.sum((weighted * chain)[:, None] * vander, axis=0))
        chain = chain * npoly.polyval(y, npoly.polyder(layer.as_array()))
    grad = np.concatenate(parts) if parts else np.zeros(0)
    return value, grad


def gradient(v, prob: FitProblem) -> np.ndarray:
    """Analytic gradient of F restricted to the free coordinates.

    Raises:
        LengthMismatch: if len(v) != prob.dof
    """
    return loss_and_gradient(v, prob)[1]


def l2_error_of(v, prob: FitProblem) -> float:
    """sqrt(2F): the quadrature L2 norm of the residual."""
    return float(np.sqrt(2.0 * loss(v, prob)))


def residual_curve(v, prob: FitProblem, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(f(xs), g(xs)) for plotting on an arbitrary grid."""
    g = prob.unpack(v)
    return np.asarray(eval_target(prob.target, xs), dtype=float), np.asarray(g(xs), dtype=float)


def linear_ls_seed(coeffs: Sequence[float], outer_degree: int) -> np.ndarray:
    """Map single-layer coefficients c_0..c_n to an endpoint of a two-layer sweep.

    outer_degree == n: inner layer is x, the outer layer carries every c_k.
    outer_degree == 1: q(y) = c_n * y + c_0 and p = sum_{k>=1} (c_k / c_n) x**k,
    so p is monic with zero constant term and q(p(x)) reproduces the input.
    """
    c = np.asarray(coeffs, dtype=float)
    n = len(c) - 1
    if outer_degree == n:
        return c.copy()
    if outer_degree == 1:
        if abs(c[-1]) <= 1e-12 * np.max(np.abs(c)):
            raise ValueError("Leading linear least-squares coefficient is zero")
        return np.concatenate(([c[0], c[-1]], c[1:-1] / c[-1]))
    raise ValueError(f"Linear least-squares seeding only defined at the sweep endpoints, got outer degree {outer_degree}")


def simplified_loss(a1: float, b1: float, target: TargetSpec, rule: QuadratureRule = None) -> float:
    """1/2 * int (b1 * x^2 + b1 * a1 * x - f)^2: a two-parameter slice of the (2, 3) problem."""
    if rule is None:
        rule = gauss_legendre()
    x = rule.nodes
    residual = np.asarray(eval_target(target, x), dtype=float) - b1 * (x * x + a1 * x)
    return 0.5 * weighted_sum(residual * residual, rule)


def simplified_loss_gradient(a1: float, b1: float, target: TargetSpec, rule: QuadratureRule = None) -> Tuple[float, float]:
    """Closed-form (dF/da1, dF/db1) of simplified_loss.

    dF/da1 = -b1 * int r * x and dF/db1 = -int r * (x^2 + a1 * x), r = f - b1 * (x^2 + a1 * x).
    """
    if rule is None:
        rule = gauss_legendre()
    x = rule.nodes
    shape = x * x + a1 * x
    residual = np.asarray(eval_target(target, x), dtype=float) - b1 * shape
    d_a1 = -b1 * weighted_sum(residual * x, rule)
    d_b1 = -weighted_sum(residual * shape, rule)
    return d_a1, d_b1


def simplified_loss_surface(target: TargetSpec, a_values: Sequence[float], b_values: Sequence[float],
                            rule: QuadratureRule = None) -> np.ndarray:
    """Grid of simplified_loss, rows indexed by b1 and columns by a1."""
    if rule is None:
        rule = gauss_legendre()
    x = rule.nodes
    f = np.asarray(eval_target(target, x), dtype=float)
    grid = np.empty((len(b_values), len(a_values)))
    for i, b1 in enumerate(b_values):
        for j, a1 in enumerate(a_values):
            residual = f - b1 * (x * x + a1 * x)
            grid[i, j] = 0.5 * weighted_sum(residual * residual, rule)
    return grid
