"""
Composite ("deep") polynomial approximation on [-1, 1].

Least-squares fitting of compositions p1(p2(...pL(x))) against a target
function, with the supporting quadrature, optimizers, deflation, explicit
Newton-iteration composites and conformal-map interpolation studies.
"""

__all__ = [
    'conformal',
    'deflation',
    'errors',
    'newton_compose',
    'objective',
    'optimizer',
    'polynomial',
    'quadrature',
    'targets',
]
