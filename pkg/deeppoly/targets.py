#!/usr/bin/env python3
"""
Target functions on [-1, 1].

Targets are described by a TargetSpec and parsed from short strings such as
"runge:a=25", "tanh:alpha=3", "bessel:n=40,c=30,s=1", "abs", "sign" or
"custom:coeffs=1;0;-2" (a polynomial, ascending powers).

Bessel functions of the first kind J_n(z) for integer n and real z use the
power series for |z| <= 12 and Miller's backward recurrence, normalized by
J_0 + 2 * sum(J_2k) = 1, above that.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

import config
from deeppoly.errors import TargetParseError

logger = logging.getLogger(__name__)

VALID_KINDS = ('runge', 'tanh', 'bessel', 'abs', 'sign', 'custom')

# Miller recurrence rescaling threshold
_RESCALE_AT = 1e250


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    a: float = 25.0
    alpha: float = 3.0
    n: int = 0
    c: float = 1.0
    s: float = 0.0
    coeffs: Tuple[float, ...] = ()
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise TargetParseError(f"Unknown target kind {self.kind!r}, expected one of {VALID_KINDS}")
        if self.kind == 'bessel':
            if int(self.n) != self.n or not 0 <= self.n <= config.BESSEL_MAX_ORDER:
                raise TargetParseError(f"Bessel order must be an integer in [0, {config.BESSEL_MAX_ORDER}], got {self.n!r}")
            object.__setattr__(self, 'n', int(self.n))
        if self.kind == 'custom' and self.func is None and not self.coeffs:
            raise TargetParseError("custom target needs coeffs or a callable")
        object.__setattr__(self, 'coeffs', tuple(float(c) for c in self.coeffs))

    def __call__(self, x):
        return eval_target(self, x)

    def describe(self) -> str:
        """Canonical string form, parseable by parse_target."""
        if self.kind == 'runge':
            return f"runge:a={self.a:g}"
        if self.kind == 'tanh':
            return f"tanh:alpha={self.alpha:g}"
        if self.kind == 'bessel':
            return f"bessel:n={self.n},c={self.c:g},s={self.s:g}"
        if self.kind == 'custom':
            if self.coeffs:
                return 'custom:coeffs=' + ';'.join(f"{c:.17g}" for c in self.coeffs)
            return 'custom:callable'
        return self.kind


def parse_target(text: str) -> TargetSpec:
    """Parse "kind:key=value,key=value" into a TargetSpec.

    Raises:
        TargetParseError: on unknown kinds, keys or malformed values
    """
    text = (text or '').strip()
    if not text:
        raise TargetParseError("Empty target string")
    kind, _, rest = text.partition(':')
    kind = kind.strip().lower()
    if kind not in VALID_KINDS:
        raise TargetParseError(f"Unknown target kind {kind!r} in {text!r}")

    params: Dict[str, object] = {}
    allowed = {
        'runge': {'a'},
        'tanh': {'alpha'},
        'bessel': {'n', 'c', 's'},
        'abs': set(),
        'sign': set(),
        'custom': {'coeffs'},
    }[kind]
    for item in filter(None, (part.strip() for part in rest.split(','))):
        key, sep, value = item.partition('=')
        key = key.strip()
        if not sep or key not in allowed:
            raise TargetParseError(f"Unexpected parameter {item!r} for target {kind!r}")
        try:
            if key == 'coeffs':
                params[key] = tuple(float(v) for v in value.split(';') if v.strip())
            elif key == 'n':
                params[key] = int(value)
            else:
                params[key] = float(value)
        except ValueError as exc:
            raise TargetParseError(f"Bad value in {item!r}: {exc}") from exc
    return TargetSpec(kind=kind, **params)


def _bessel_series(n: int, z: float) -> float:
    if z == 0.0:
        return 1.0 if n == 0 else 0.0
    half = z / 2.0
    term = math.exp(n * math.log(half) - math.lgamma(n + 1))
    terms = [term]
    peak = abs(term)
    q = -half * half
    for k in range(1, 200):
        term *= q / (k * (k + n))
        terms.append(term)
        peak = max(peak, abs(term))
        if abs(term) < 1e-17 * peak and k > half:
            break
    return math.fsum(terms)


def _bessel_miller(n: int, z: float) -> float:
    start = 2 * (n + math.ceil(z) + 20)
    j_next, j = 0.0, 1e-30
    norm = 0.0
    result = 0.0
    for k in range(start, 0, -1):
        j_prev = 2.0 * k / z * j - j_next
        j_next, j = j, j_prev
        # j now holds J_{k-1} up to scale
        if k - 1 == n:
            result = j
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
        if abs(j) > _RESCALE_AT:
            j /= _RESCALE_AT
            j_next /= _RESCALE_AT
            norm /= _RESCALE_AT
            result /= _RESCALE_AT
    norm += j
    return result / norm


def bessel_j(n: int, z: float) -> float:
    """J_n(z) for integer 0 <= n <= 64 and real |z| <= 200."""
    n = int(n)
    z = float(z)
    if not 0 <= n <= config.BESSEL_MAX_ORDER:
        raise ValueError(f"Bessel order {n} outside [0, {config.BESSEL_MAX_ORDER}]")
    if abs(z) > config.BESSEL_MAX_ARG:
        raise ValueError(f"Bessel argument {z} outside [-{config.BESSEL_MAX_ARG}, {config.BESSEL_MAX_ARG}]")
    sign = -1.0 if (z < 0 and n % 2) else 1.0
    z = abs(z)
    if z <= config.BESSEL_SERIES_LIMIT:
        return sign * _bessel_series(n, z)
    return sign * _bessel_miller(n, z)


_bessel_vec = np.vectorize(bessel_j, otypes=[float])


def eval_target(spec: TargetSpec, x):
    """Evaluate the target at x (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if spec.kind == 'runge':
        out = 1.0 / (1.0 + spec.a * arr * arr)
    elif spec.kind == 'tanh':
        out = np.tanh(spec.alpha * arr)
    elif spec.kind == 'bessel':
        out = _bessel_vec(spec.n, spec.c * (arr + spec.s))
    elif spec.kind == 'abs':
        out = np.abs(arr)
    elif spec.kind == 'sign':
        out = np.sign(arr)
    elif spec.func is not None:
        out = np.asarray(spec.func(arr), dtype=float)
    else:
        out = np.zeros_like(arr) + spec.coeffs[-1]
        for c in reversed(spec.coeffs[:-1]):
            out = out * arr + c
    if np.ndim(x) == 0:
        return float(out)
    return out
