#!/usr/bin/env python3
"""
Exception hierarchy for the deeppoly package.

Hard errors are raised to the caller. Soft failures inside the optimizers
(line search, singular Hessian, stalled Newton, duplicate deflation root)
are caught and recorded as flags on trial records instead.
"""


class DeepPolyError(Exception):
    """Base class for every error raised by deeppoly."""


class ConfigError(DeepPolyError):
    """Invalid user input: CLI flags, presets, signatures."""


class TargetParseError(ConfigError):
    """A target string could not be parsed."""


class NumericalFailure(DeepPolyError):
    """A run produced no finite result (e.g. every trial diverged)."""


class DegreeCapExceeded(DeepPolyError):
    """Expanding a composite would exceed the configured degree cap."""


class SingularLeadingCoefficient(DeepPolyError):
    """An inner layer has a zero leading coefficient and cannot be normalized."""


class InvalidOrder(DeepPolyError):
    """Quadrature order outside the supported range."""


class NonFiniteIntegrand(DeepPolyError):
    """An integrand evaluated to NaN or infinity at a quadrature node."""


class LengthMismatch(DeepPolyError):
    """A parameter vector does not match the problem's degrees of freedom."""


class LineSearchFailure(DeepPolyError):
    """No step satisfying the strong Wolfe conditions was found."""


class SingularHessian(DeepPolyError):
    """The finite-difference Hessian could not be factorized."""


class RankDeficient(DeepPolyError):
    """A least-squares system does not have full column rank."""


class AtKnownRoot(DeepPolyError):
    """The deflation factor was evaluated exactly at a deflated root."""


class SingularK(DeepPolyError):
    """The deflated Jacobian could not be factorized."""


class DomainError(DeepPolyError):
    """An argument lies outside the domain of a Newton-composite iteration."""


class DuplicateNodes(DeepPolyError):
    """A map sends two interpolation nodes to the same point."""


class InverseMapFailure(DeepPolyError):
    """Inverting a conformal map did not converge."""
