#!/usr/bin/env python3
"""
Equispaced interpolation after a change of variables.

Equispaced interpolation of degree n converges on [-1, 1] only when the
target is analytic inside the Runge region, bounded by the level curve of

    u(s) = -1 + 1/2 * Re[(s + 1) log(s + 1) - (s - 1) log(s - 1)]

through s = +-1; it crosses the imaginary axis near +-0.5255i. The Runge
function 1 / (1 + 25 x^2) has poles at +-0.2i, well inside.

Interpolating f(x(z)) in z instead, with x(z) = (z + z^3) / 2, moves the
poles to the roots of z^3 + z -+ 2i / sqrt(a) = 0, all of which lie outside
the region for a = 25, so equispaced interpolation in z converges. The
cosine map x = -cos(pi (z + 1) / 2) turns equispaced z-nodes into
Chebyshev-Lobatto points; its interpolant is the degree-n polynomial in x
through those points and serves as the reference.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
import pandas as pd
from scipy.interpolate import BarycentricInterpolator

import config
from deeppoly.errors import DomainError, DuplicateNodes, InverseMapFailure
from deeppoly.quadrature import QuadratureRule, gauss_legendre, l2_error

logger = logging.getLogger(__name__)

VALID_MAPS = ('identity', 'cubic', 'cosine')


def _xlogx(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w)
    nonzero = w != 0
    out[nonzero] = w[nonzero] * np.log(w[nonzero])
    return out


def equispaced_potential(s):
    """Potential of the uniform node measure on [-1, 1]; continuous at s = +-1."""
    w = np.asarray(s, dtype=complex)
    flat = np.atleast_1d(w)
    value = -1.0 + 0.5 * np.real(_xlogx(flat + 1.0) - _xlogx(flat - 1.0))
    if np.ndim(s) == 0:
        return float(value[0])
    return value.reshape(w.shape)


def in_runge_region(s):
    """True strictly inside the critical level curve through +-1."""
    result = np.asarray(equispaced_potential(s)) < equispaced_potential(1.0)
    if np.ndim(s) == 0:
        return bool(result)
    return result


def runge_region_crossing(tol: float = 1e-15) -> float:
    """Imaginary-axis crossing t of the Runge region boundary, by bisection on u(it) - u(1)."""
    level = equispaced_potential(1.0)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if equispaced_potential(1j * mid) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cheb_potential(s):
    """Potential of the Chebyshev measure: -log 2 on [-1, 1], growing off it."""
    w = np.asarray(s, dtype=complex)
    joukowski = np.abs(w + 1j * np.sqrt(1.0 - w * w))
    with np.errstate(divide='ignore'):
        value = np.log(np.maximum(joukowski, 1.0 / joukowski)) - np.log(2.0)
    if np.ndim(s) == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class MapSpec:
    """Increasing bijection z -> x of [-1, 1] onto itself."""
    kind: str = 'cubic'

    def __post_init__(self):
        if self.kind not in VALID_MAPS:
            raise ValueError(f"Unknown map {self.kind!r}, expected one of {VALID_MAPS}")

    @property
    def polynomial_in_x(self) -> bool:
        """True when the interpolant is a polynomial in x through the mapped nodes, not in z."""
        return self.kind == 'cosine'

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == 'cubic':
            return 0.5 * (z + z ** 3)
        if self.kind == 'cosine':
            return -np.cos(0.5 * np.pi * (z + 1.0))
        return z.copy()

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == 'cubic':
            return 0.5 * (1.0 + 3.0 * z * z)
        if self.kind == 'cosine':
            return 0.5 * np.pi * np.sin(0.5 * np.pi * (z + 1.0))
        return np.ones_like(z)

    def inverse(self, x):
        """z(x) for x in [-1, 1].

        Raises:
            DomainError: for x outside [-1, 1]
            InverseMapFailure: if the cubic Newton polish does not converge
        """
        x = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x)) or np.any(np.abs(x) > 1.0):
            raise DomainError("Map inverse is defined for x in [-1, 1]")
        if self.kind == 'cubic':
            return _cubic_inverse(x)
        if self.kind == 'cosine':
            return 2.0 * np.arccos(-x) / np.pi - 1.0
        return x.copy()


def _cubic_inverse(x: np.ndarray) -> np.ndarray:
    # z^3 + z - 2x = 0 has one real root; Cardano then Newton
    disc = np.sqrt(x * x + 1.0 / 27.0)
    z = np.cbrt(x + disc) + np.cbrt(x - disc)
    for _ in range(config.INVERSE_MAP_MAX_ITERS):
        residual = 0.5 * (z + z ** 3) - x
        if np.all(np.abs(residual) <= config.INVERSE_MAP_TOL):
            return z
        z = z - residual / (0.5 * (1.0 + 3.0 * z * z))
    residual = 0.5 * (z + z ** 3) - x
    if np.all(np.abs(residual) <= config.INVERSE_MAP_TOL):
        return z
    raise InverseMapFailure(f"Cubic map inverse stalled, residual {np.max(np.abs(residual)):.3e}")


def _cardano_roots(p: complex, q: complex) -> List[complex]:
    """All three roots of z^3 + p z + q = 0 with complex coefficients."""
    sq = np.sqrt(complex((q / 2) ** 2 + (p / 3) ** 3))
    u3 = -q / 2 + sq
    if abs(-q / 2 - sq) > abs(u3):
        u3 = -q / 2 - sq
    if u3 == 0:
        return [0j, 0j, 0j]
    c = u3 ** (1.0 / 3.0)
    omega = np.exp(2j * np.pi / 3)
    roots = []
    for k in range(3):
        ck = c * omega ** k
        roots.append(complex(ck - p / (3 * ck)))
    return roots


def cubic_map_poles(a: float = config.CONFORMAL_RUNGE_A) -> List[complex]:
    """The six z with 1 + a * ((z + z^3) / 2)^2 = 0, i.e. z^3 + z = +-2i / sqrt(a).

    Each root is polished by Newton on its cubic and checked by back-substitution.
    """
    if not a > 0:
        raise ValueError(f"Runge parameter must be positive, got {a}")
    roots = []
    for sign in (1.0, -1.0):
        q = -sign * 2j / np.sqrt(a)
        for z in _cardano_roots(1.0, q):
            for _ in range(5):
                z = z - (z ** 3 + z + q) / (3 * z * z + 1)
            residual = abs(1 + a * (0.5 * (z + z ** 3)) ** 2)
            if residual > config.POLE_RESIDUAL_TOL:
                logger.warning(f"Pole {z:.6g} has back-substitution residual {residual:.3e}")
            roots.append(complex(z))
    return sorted(roots, key=lambda z: (round(abs(z), 12), z.imag, z.real))


def pole_report(a: float = config.CONFORMAL_RUNGE_A) -> dict:
    """cubic_map_poles with modulus, region membership and residual for each root."""
    rows = []
    for z in cubic_map_poles(a):
        rows.append({
            'real': z.real,
            'imag': z.imag,
            'modulus': abs(z),
            'in_runge_region': in_runge_region(z),
            'residual': abs(1 + a * (0.5 * (z + z ** 3)) ** 2),
        })
    return {'a': float(a), 'roots': rows}


@dataclass
class Interpolant:
    """Degree-n interpolant through the images of n + 1 equispaced z-nodes.

    barycentric is built on `nodes`: x_nodes when the map interpolates in x,
    z_nodes otherwise.
    """
    mapping: MapSpec
    z_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray
    barycentric: BarycentricInterpolator

    @property
    def n(self) -> int:
        return len(self.z_nodes) - 1

    @property
    def nodes(self) -> np.ndarray:
        return self.x_nodes if self.mapping.polynomial_in_x else self.z_nodes

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.barycentric.wi)


def interpolate_mapped(target: Callable[[np.ndarray], np.ndarray], mapping: MapSpec, n: int) -> Interpolant:
    """Interpolate target at the images x(z) of n + 1 equispaced z in [-1, 1].

    The interpolant is a polynomial in z for the cubic and identity maps and
    a polynomial in x for the cosine map.

    Raises:
        DuplicateNodes: if the mapped nodes are not distinct
    """
    if n < 1:
        raise ValueError(f"Interpolation degree must be >= 1, got {n}")
    z = np.linspace(-1.0, 1.0, n + 1)
    x = mapping.forward(z)
    x[0], x[-1] = -1.0, 1.0
    if np.any(np.diff(x) <= 0.0):
        raise DuplicateNodes(f"Map {mapping.kind!r} produced repeated nodes at n={n}")
    values = np.asarray(target(x), dtype=float)
    nodes = x if mapping.polynomial_in_x else z
    return Interpolant(mapping=mapping, z_nodes=z, x_nodes=x, values=values,
                       barycentric=BarycentricInterpolator(nodes, values))


def eval_interpolant(itp: Interpolant, mapping: MapSpec, x):
    """Value of the interpolant at x in [-1, 1].

    Maps that interpolate in z are inverted first; the cosine map is
    evaluated at x directly.

    Raises:
        DomainError: for x outside [-1, 1]
    """
    if mapping.polynomial_in_x:
        t = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(np.abs(t) > 1.0):
            raise DomainError("Interpolant is defined for x in [-1, 1]")
    else:
        t = mapping.inverse(x)
    out = itp.barycentric(np.atleast_1d(t))
    if np.ndim(x) == 0:
        return float(out[0])
    return np.asarray(out, dtype=float).reshape(np.shape(x))


def convergence_study(target: Callable[[np.ndarray], np.ndarray], mapping: MapSpec,
                      n_list: Sequence[int] = config.CONFORMAL_N_LIST,
                      rule: QuadratureRule = None) -> pd.DataFrame:
    """Rows (n, l2_error, sup_error); L2 by quadrature in x, sup on a fine x grid."""
    if rule is None:
        rule = gauss_legendre()
    grid = np.linspace(-1.0, 1.0, config.SUP_GRID_POINTS)
    exact = np.asarray(target(grid), dtype=float)
    rows = []
    for n in n_list:
        itp = interpolate_mapped(target, mapping, int(n))
        l2 = l2_error(target, lambda x: eval_interpolant(itp, mapping, x), rule)
        sup = float(np.max(np.abs(exact - eval_interpolant(itp, mapping, grid))))
        logger.debug(f"{mapping.kind} map n={n}: l2={l2:.3e} sup={sup:.3e}")
        rows.append({'n': int(n), 'l2_error': l2, 'sup_error': sup})
    return pd.DataFrame(rows, columns=['n', 'l2_error', 'sup_error'])


def map_comparison(target: Callable[[np.ndarray], np.ndarray],
                   n_list: Sequence[int] = config.CONFORMAL_N_LIST,
                   rule: QuadratureRule = None) -> pd.DataFrame:
    """One row per n with the L2 error of every map side by side."""
    table = pd.DataFrame({'n': [int(n) for n in n_list]})
    for kind, column in (('cubic', 'l2_error_cubic'), ('cosine', 'l2_error_cos'), ('identity', 'l2_error_identity')):
        study = convergence_study(target, MapSpec(kind), n_list, rule)
        table[column] = study['l2_error'].to_numpy()
    return table
