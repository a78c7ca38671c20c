#!/usr/bin/env python3
"""
Composite polynomials from the Newton iteration for inverse p-th roots.

    f_0 = 1,  f_{k+1} = (1/p) * f_k * ((p + 1) - f_k**p * x)

converges to x**(-1/p) on (0, 1]. With p = 2 and x replaced by x**2 the
iterates approach 1/|x|, so x**2 * f_k(x) approximates |x| and x * f_k(x)
approximates sign(x). Each step is a fixed polynomial in (f_k, x), so f_k
is a composite whose degree obeys d_{k+1} = 3 d_k + 2, d_k = 3**k - 1.

For x in (0, 1] the ratio r_k = |x| f_k increases monotonically to 1 and
the relative error E_k = 1 - r_k satisfies E_{k+1} <= (5/8) E_k once
r_k >= 1/2.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

import config
from deeppoly.errors import DegreeCapExceeded, DomainError
from deeppoly.polynomial import Polynomial

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonIterate:
    """f_k as a nested evaluation program; x_power=2 drives it with x**2."""
    p: int
    k: int
    x_power: int = 1

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"Root order p must be >= 2, got {self.p}")
        if self.k < 0:
            raise ValueError(f"Iteration count k must be >= 0, got {self.k}")

    @property
    def degree(self) -> int:
        """Degree of f_k in x: d_{k+1} = (p + 1) d_k + x_power."""
        d = 0
        for _ in range(self.k):
            d = (self.p + 1) * d + self.x_power
        return d

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        y = arr ** self.x_power
        f = np.ones_like(y)
        for _ in range(self.k):
            f = f * ((self.p + 1) - f ** self.p * y) / self.p
        if np.ndim(x) == 0:
            return float(f)
        return f

    def expanded(self, cap: int = None) -> Polynomial:
        """Monomial coefficients of f_k in x.

        Raises:
            DegreeCapExceeded: if the degree exceeds cap
        """
        if cap is None:
            cap = config.DEGREE_CAP
        if self.degree > cap:
            raise DegreeCapExceeded(f"f_{self.k} has degree {self.degree}, cap is {cap}")
        y = np.zeros(self.x_power + 1)
        y[-1] = 1.0
        f = np.array([1.0])
        for _ in range(self.k):
            power = np.array([1.0])
            for _ in range(self.p):
                power = np.convolve(power, f)
            bracket = -np.convolve(power, y)
            bracket[0] += self.p + 1
            f = np.convolve(f, bracket) / self.p
        return Polynomial(f)


def _check_inverse_domain(x: np.ndarray):
    if np.any(~np.isfinite(x)) or np.any(x <= 0.0) or np.any(x > 1.0):
        raise DomainError("Inverse p-th root iteration is defined for x in (0, 1]")


def inv_pth_root_iterate(p: int, k: int, x):
    """f_k(x) for the inverse p-th root iteration.

    Raises:
        DomainError: for x outside (0, 1]
    """
    arr = np.asarray(x, dtype=float)
    _check_inverse_domain(arr)
    return NewtonIterate(p=p, k=k)(x)


def abs_approx(k: int, x):
    """x**2 * f_k(x) with the p = 2 iteration driven by x**2; exactly 0 at x = 0."""
    arr = np.asarray(x, dtype=float)
    result = arr * arr * NewtonIterate(p=2, k=k, x_power=2)(arr)
    if np.ndim(x) == 0:
        return float(result)
    return result


def sign_approx(k: int, x):
    """x * f_k(x): the same iterate applied to sign(x) = x / |x|."""
    arr = np.asarray(x, dtype=float)
    result = arr * NewtonIterate(p=2, k=k, x_power=2)(arr)
    if np.ndim(x) == 0:
        return float(result)
    return result


def abs_expanded(k: int, cap: int = None) -> Polynomial:
    """Monomial coefficients of x**2 * f_k(x), degree 3**k + 1.

    Raises:
        DegreeCapExceeded: if 3**k + 1 exceeds cap
    """
    if cap is None:
        cap = config.DEGREE_CAP
    if 3 ** k + 1 > cap:
        raise DegreeCapExceeded(f"x^2 f_{k} has degree {3 ** k + 1}, cap is {cap}")
    f = NewtonIterate(p=2, k=k, x_power=2).expanded(cap)
    return Polynomial(np.concatenate(([0.0, 0.0], f.as_array())))


def convergence_trace(k_max: int, xs: Sequence[float]) -> pd.DataFrame:
    """Rows (k, x, r, error, ratio) with r = |x| f_k, error = 1 - r, ratio = E_{k+1} / E_k.

    The error is carried by 1 - r_{k+1} = (1 - r_k)^2 (2 + r_k) / 2, so it
    keeps full relative accuracy after r has rounded to 1. ratio is NaN at
    k = k_max and wherever E_k is zero.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs == 0.0) or np.any(np.abs(xs) > 1.0):
        raise DomainError("convergence_trace needs sample points in [-1, 1] without 0")
    err = 1.0 - np.abs(xs)
    errors = []
    for _ in range(k_max + 1):
        r = 1.0 - err
        errors.append((r, err))
        err = err * err * (2.0 + r) / 2.0
    rows = []
    for k, (r, err) in enumerate(errors):
        if k < k_max:
            nxt = errors[k + 1][1]
            with np.errstate(divide='ignore', invalid='ignore'):
                ratio = np.where(err != 0.0, nxt / err, np.nan)
        else:
            ratio = np.full_like(err, np.nan)
        for x_i, r_i, e_i, q_i in zip(xs, r, err, ratio):
            rows.append({'k': k, 'x': x_i, 'r': r_i, 'error': e_i, 'ratio': q_i})
    return pd.DataFrame(rows, columns=['k', 'x', 'r', 'error', 'ratio'])


def inv_pth_root_trace(p: int, k_max: int, xs: Sequence[float]) -> pd.DataFrame:
    """Rows (k, x, value, error) with error = 1 - x**(1/p) * f_k(x)."""
    xs = np.asarray(xs, dtype=float)
    _check_inverse_domain(xs)
    root = xs ** (1.0 / p)
    f = np.ones_like(xs)
    rows = []
    for k in range(k_max + 1):
        for x_i, f_i, e_i in zip(xs, f, 1.0 - root * f):
            rows.append({'k': k, 'x': x_i, 'value': f_i, 'error': e_i})
        f = f * ((p + 1) - f ** p * xs) / p
    return pd.DataFrame(rows, columns=['k', 'x', 'value', 'error'])
