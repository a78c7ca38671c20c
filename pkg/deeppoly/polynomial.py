#!/usr/bin/env python3
"""
Univariate and composite polynomials.

Coefficients are stored in ascending powers: coeffs[k] multiplies x**k.
A DeepPolynomial stores its layers outermost first, so layers[0] is the
polynomial applied last.

Normalization rewrites q(p(x)) so that the inner polynomial is monic with
zero constant term, without changing the composite. Applied from the
innermost pair outwards it brings a whole chain into normalized form, in
which the composite has sum(mu) - 2(L-1) free coefficients.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

import config
from deeppoly.errors import DegreeCapExceeded, SingularLeadingCoefficient

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class Polynomial:
    """Immutable polynomial with ascending-power coefficients."""
    coeffs: Tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.ravel(self.coeffs))
        if not coeffs:
            raise ValueError("Polynomial needs at least one coefficient")
        object.__setattr__(self, 'coeffs', coeffs)

    @property
    def degree(self) -> int:
        """Declared degree (trailing zero coefficients are kept)."""
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        return self.coeffs[-1]

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)

    def __call__(self, x: ArrayLike):
        return eval_poly(self, x)

    def to_json(self) -> List[float]:
        return list(self.coeffs)

    @staticmethod
    def from_json(data: Sequence[float]) -> 'Polynomial':
        return Polynomial(tuple(data))


@dataclass(frozen=True)
class DeepPolynomial:
    """Composite p1(p2(...pL(x))) with layers stored outermost first."""
    layers: Tuple[Polynomial, ...]
    normalized: bool = False

    def __post_init__(self):
        layers = tuple(layer if isinstance(layer, Polynomial) else Polynomial(layer) for layer in self.layers)
        if not layers:
            raise ValueError("DeepPolynomial needs at least one layer")
        object.__setattr__(self, 'layers', layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def signature(self) -> Tuple[int, ...]:
        """Number of coefficients per layer, outermost first."""
        return tuple(len(layer.coeffs) for layer in self.layers)

    @property
    def degree(self) -> int:
        return math.prod(layer.degree for layer in self.layers)

    def __call__(self, x: ArrayLike):
        return eval_deep(self, x)

    def to_json(self) -> dict:
        return {
            'layers': [layer.to_json() for layer in self.layers],
            'normalized': self.normalized,
        }

    @staticmethod
    def from_json(data: dict) -> 'DeepPolynomial':
        return DeepPolynomial(
            tuple(Polynomial.from_json(layer) for layer in data['layers']),
            normalized=bool(data.get('normalized', False)),
        )


def _horner(coeffs: Sequence[float], x):
    result = np.zeros_like(x) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        result = result * x + c
    return result


def eval_poly(p: Polynomial, x: ArrayLike):
    """Evaluate p at x by Horner's rule. Scalars in, float out."""
    arr = np.asarray(x)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    result = _horner(p.coeffs, arr)
    if np.ndim(x) == 0:
        return result.item()
    return result


def eval_deep(g: DeepPolynomial, x: ArrayLike):
    """Evaluate a composite innermost layer first, without expanding it."""
    value = np.asarray(x)
    if not np.iscomplexobj(value):
        value = value.astype(float)
    for layer in reversed(g.layers):
        value = _horner(layer.coeffs, value)
    if np.ndim(x) == 0:
        return value.item()
    return value


def compose(outer: Polynomial, inner: Polynomial) -> Polynomial:
    """Coefficients of outer(inner(x)), degree deg(outer) * deg(inner)."""
    inner_c = inner.as_array()
    acc = np.array([outer.coeffs[-1]])
    for c in reversed(outer.coeffs[:-1]):
        acc = np.convolve(acc, inner_c)
        acc[0] += c
    return Polynomial(acc)


def expand(g: DeepPolynomial, cap: int = None) -> Polynomial:
    """Multiply out a composite into monomial form.

    Raises:
        DegreeCapExceeded: if the product of layer degrees exceeds cap
    """
    if cap is None:
        cap = config.DEGREE_CAP
    if g.degree > cap:
        raise DegreeCapExceeded(f"Composite degree {g.degree} exceeds cap {cap}")
    acc = g.layers[-1]
    for layer in reversed(g.layers[:-1]):
        acc = compose(layer, acc)
    return acc


def derivative(p: Polynomial) -> Polynomial:
    """Derivative coefficients; a constant differentiates to [0.0]."""
    return Polynomial(npoly.polyder(p.as_array()))


def normalize_pair(q: Polynomial, p: Polynomial) -> Tuple[Polynomial, Polynomial]:
    """Rewrite q(p(x)) as q~(p~(x)) with p~ monic and p~(0) = 0.

    With p(x) = a_e * p~(x) + a_0, where p~ = (p - a_0) / a_e, the outer
    polynomial becomes q~(y) = q(a_e * y + a_0), re-expanded binomially:

        q~_j = sum_{i >= j} b_i * a_e**i * C(i, j) * (a_0 / a_e)**(i - j)

    An already normalized pair is returned unchanged.

    Raises:
        SingularLeadingCoefficient: if p's leading coefficient is zero
    """
    a_e = p.leading
    if a_e == 0.0:
        raise SingularLeadingCoefficient("Inner polynomial has zero leading coefficient")
    shift = p.coeffs[0] / a_e

    p_tilde = [c / a_e for c in p.coeffs]
    p_tilde[0] = 0.0
    p_tilde[-1] = 1.0

    b = q.coeffs
    q_tilde = []
    for j in range(len(b)):
        total = 0.0
        for i in range(j, len(b)):
            total += b[i] * a_e ** i * math.comb(i, j) * shift ** (i - j)
        q_tilde.append(total)
    return Polynomial(q_tilde), Polynomial(p_tilde)


def normalize_chain(g: DeepPolynomial) -> DeepPolynomial:
    """Normalize every inner layer, working from the innermost pair outwards."""
    layers = list(g.layers)
    for i in range(len(layers) - 1, 0, -1):
        layers[i - 1], layers[i] = normalize_pair(layers[i - 1], layers[i])
    return DeepPolynomial(tuple(layers), normalized=True)


def degrees_of_freedom(signature: Sequence[int]) -> int:
    """Free coefficients of a normalized composite: sum(mu) - 2(L - 1)."""
    if not signature:
        raise ValueError("Signature must have at least one layer")
    if any(int(mu) < 1 for mu in signature):
        raise ValueError(f"Every layer needs at least one coefficient, got {tuple(signature)}")
    return sum(int(mu) for mu in signature) - 2 * (len(signature) - 1)


def decompose(g: Polynomial, outer_degree: int, inner_degree: int) -> Tuple[Polynomial, Polynomial]:
    """Recover the normalized factors (q, p) of g = q(p(x)).

    The top inner_degree coefficients of g / b_d agree with those of p**d,
    which fixes p one coefficient at a time from the top. q then follows by
    least squares on the coefficient vectors of the powers of p.
    """
    d, e = int(outer_degree), int(inner_degree)
    if d < 1 or e < 1:
        raise ValueError("decompose needs outer and inner degree >= 1")
    if g.degree != d * e:
        raise ValueError(f"Degree {g.degree} is not {d} * {e}")
    target = g.as_array()
    lead = target[-1]
    if lead == 0.0:
        raise SingularLeadingCoefficient("Composite has zero leading coefficient")

    p = np.zeros(e + 1)
    p[-1] = 1.0
    for k in range(1, e):
        power = npoly.polypow(p, d)
        idx = d * e - k
        p[e - k] = (target[idx] / lead - power[idx]) / d

    columns = []
    power = np.array([1.0])
    for _ in range(d + 1):
        column = np.zeros(d * e + 1)
        column[:len(power)] = power
        columns.append(column)
        power = np.convolve(power, p)
    basis = np.column_stack(columns)
    q, *_ = np.linalg.lstsq(basis, target, rcond=None)
    return Polynomial(q), Polynomial(p)
