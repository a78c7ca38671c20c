#!/usr/bin/env python3
"""
Deflated Newton search for further local minima.

Known minimizers r_1..r_k repel the Newton iteration on grad F through the
scalar factor

    mu(u) = 1 / (prod_i ||u - r_i||)**alpha + beta

so the deflated field G(u) = mu(u) * grad F(u) keeps every other zero of
grad F and has none at the r_i. K = DG is taken by central differences
(or assembled as mu * H + grad F * grad mu^T).

defmulti runs the full search: BFGS and Newton from the initial guess give
r_1; each further round starts the deflated iteration from the latest root
plus a small perturbation, then polishes the result with BFGS and Newton on
the undeflated loss.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from deeppoly.errors import AtKnownRoot
from deeppoly.optimizer import (
    LocalResult,
    Objective,
    OptimizerConfig,
    fd_hessian,
    run_trial,
    solve_newton_system,
)

logger = logging.getLogger(__name__)


@dataclass
class DeflationState:
    roots: List[np.ndarray] = field(default_factory=list)
    alpha: float = config.DEFLATION_ALPHA
    beta: float = config.DEFLATION_BETA
    perturb: float = config.DEFLATION_PERTURB
    step: float = config.DEFLATION_STEP
    max_iters: int = config.DEFLATION_MAX_ITERS

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.perturb > 0:
            raise ValueError(f"perturb must be positive, got {self.perturb}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        self.roots = [np.asarray(r, dtype=float) for r in self.roots]

    def distances(self, u: np.ndarray) -> np.ndarray:
        return np.array([np.linalg.norm(u - r) for r in self.roots])


@dataclass
class DeflationStep:
    x: np.ndarray
    decrement: float
    singular: bool


@dataclass
class DeflationRound:
    index: int
    root: np.ndarray
    error: float
    duplicate: bool
    deflation_iters: int
    bfgs_iters: int
    newton_iters: int
    flags: List[str]

    def to_dict(self) -> dict:
        return {
            'round': self.index,
            'root': [float(r) for r in self.root],
            'error': self.error,
            'duplicate': self.duplicate,
            'iters': {'deflation': self.deflation_iters, 'bfgs': self.bfgs_iters, 'newton': self.newton_iters},
            'flags': list(self.flags),
        }


def deflation_factor(u, state: DeflationState) -> float:
    """mu(u) = 1 / (prod ||u - r_i||)**alpha + beta; 1 + beta with no roots.

    Raises:
        AtKnownRoot: if u coincides with a deflated root
    """
    u = np.asarray(u, dtype=float)
    dist = state.distances(u)
    if np.any(dist == 0.0):
        raise AtKnownRoot("Deflation factor evaluated at a known root")
    return float(1.0 / np.prod(dist) ** state.alpha + state.beta)


def deflation_factor_gradient(u, state: DeflationState) -> np.ndarray:
    """grad mu = -alpha * (mu - beta) * sum_i (u - r_i) / ||u - r_i||^2."""
    u = np.asarray(u, dtype=float)
    dist = state.distances(u)
    if np.any(dist == 0.0):
        raise AtKnownRoot("Deflation factor evaluated at a known root")
    shifted = 1.0 / np.prod(dist) ** state.alpha
    total = np.zeros_like(u)
    for r, d in zip(state.roots, dist):
        total += (u - r) / (d * d)
    return -state.alpha * shifted * total


def deflated_gradient(u, prob: Objective, state: DeflationState) -> np.ndarray:
    """G(u) = mu(u) * grad F(u)."""
    u = np.asarray(u, dtype=float)
    return deflation_factor(u, state) * np.asarray(prob.gradient(u), dtype=float)


def deflated_jacobian(u, prob: Objective, state: DeflationState, fd_step: float = config.FD_STEP,
                      mode: str = config.DEFLATION_JACOBIAN) -> np.ndarray:
    """K = DG, by central differences of G or assembled from mu, grad mu and the FD Hessian.

    Raises:
        AtKnownRoot: if u (or a difference point) hits a known root
    """
    u = np.asarray(u, dtype=float)
    if mode == 'assembled':
        H = fd_hessian(prob, u, fd_step)
        grad = np.asarray(prob.gradient(u), dtype=float)
        return deflation_factor(u, state) * H + np.outer(grad, deflation_factor_gradient(u, state))
    if mode != 'fd':
        raise ValueError(f"Unknown deflated Jacobian mode {mode!r}")
    n = len(u)
    K = np.empty((n, n))
    for i in range(n):
        h = fd_step * max(1.0, abs(u[i]))
        up = u.copy()
        um = u.copy()
        up[i] += h
        um[i] -= h
        with np.errstate(all='ignore'):
            K[:, i] = (deflated_gradient(up, prob, state) - deflated_gradient(um, prob, state)) / (2.0 * h)
    return K


def deflate_step(x, prob: Objective, state: DeflationState, cfg: OptimizerConfig,
                 mode: str = config.DEFLATION_JACOBIAN) -> DeflationStep:
    """One step x - s * K^-1 G, with K^-1 G from LU or a least-squares fallback."""
    x = np.asarray(x, dtype=float)
    G = deflated_gradient(x, prob, state)
    K = deflated_jacobian(x, prob, state, cfg.fd_step, mode)
    p, singular = solve_newton_system(K, G)
    decrement = float(p @ K @ p) if np.all(np.isfinite(p)) else float('nan')
    return DeflationStep(x=x - state.step * p, decrement=decrement, singular=singular)


def _nudge_off_roots(x: np.ndarray, state: DeflationState) -> np.ndarray:
    for _ in range(10):
        if not state.roots or state.distances(x).min() >= config.ROOT_PROXIMITY_GUARD:
            break
        x = x + state.perturb
    return x


def deflated_newton(prob: Objective, x0, state: DeflationState, cfg: OptimizerConfig,
                    mode: str = config.DEFLATION_JACOBIAN) -> LocalResult:
    """Iterate deflate_step until |p^T K p| < newton_stop; hitting state.max_iters is flagged."""
    x = _nudge_off_roots(np.array(x0, dtype=float), state)
    flags: List[str] = []
    it = 0
    for it in range(state.max_iters):
        try:
            step = deflate_step(x, prob, state, cfg, mode)
        except AtKnownRoot:
            x = _nudge_off_roots(x + state.perturb, state)
            continue
        if step.singular and 'singular_k' not in flags:
            flags.append('singular_k')
        if not np.isfinite(step.decrement) or not np.all(np.isfinite(step.x)):
            flags.append('deflation_diverged')
            break
        logger.debug(f"Deflated Newton iteration {it}: pKp={step.decrement:.3e}")
        if abs(step.decrement) < cfg.newton_stop:
            break
        x = _nudge_off_roots(step.x, state)
    else:
        it = state.max_iters
        flags.append('deflation_max_iters')
    with np.errstate(all='ignore'):
        value = float(prob.loss(x))
    return LocalResult(x=x, loss=value, iterations=it, flags=flags)


def defmulti(prob: Objective, init, n_def: int, alpha: float = config.DEFLATION_ALPHA,
             beta: float = config.DEFLATION_BETA, cfg: Optional[OptimizerConfig] = None,
             perturb: float = config.DEFLATION_PERTURB, step: float = config.DEFLATION_STEP,
             mode: str = config.DEFLATION_JACOBIAN) -> List[DeflationRound]:
    """Round 0 is BFGS + Newton from init; rounds 1..n_def deflate every root found so far.

    A round whose minimizer lies within DUPLICATE_ROOT_TOL of a known root is
    marked duplicate and not added to the deflation set.
    """
    if n_def < 0:
        raise ValueError(f"n_def must be >= 0, got {n_def}")
    if cfg is None:
        cfg = OptimizerConfig(n_trials=1)
    state = DeflationState(alpha=alpha, beta=beta, perturb=perturb, step=step)

    first = run_trial(prob, np.asarray(init, dtype=float), cfg, trial=0)
    rounds = [DeflationRound(index=0, root=first.params, error=first.error, duplicate=False, deflation_iters=0,
                             bfgs_iters=first.bfgs_iters, newton_iters=first.newton_iters, flags=first.flags)]
    logger.info(f"Deflation round 0: error={first.error:.6e}")
    state.roots.append(first.params.copy())
    latest = first.params

    for i in range(1, n_def + 1):
        deflated = deflated_newton(prob, latest + perturb, state, cfg, mode)
        polished = run_trial(prob, deflated.x, cfg, trial=i)
        dist = state.distances(polished.params)
        duplicate = bool(len(dist) and dist.min() < config.DUPLICATE_ROOT_TOL)
        flags = deflated.flags + polished.flags
        if duplicate:
            flags.append('duplicate_root')
            logger.warning(f"Deflation round {i} reconverged to a known root")
        else:
            state.roots.append(polished.params.copy())
            latest = polished.params
        logger.info(f"Deflation round {i}: error={polished.error:.6e} duplicate={duplicate}")
        rounds.append(DeflationRound(index=i, root=polished.params, error=polished.error, duplicate=duplicate,
                                     deflation_iters=deflated.iterations, bfgs_iters=polished.bfgs_iters,
                                     newton_iters=polished.newton_iters, flags=flags))
    return rounds


def deflation_grid(prob: Objective, init, n_def: int, alphas: Sequence[float], betas: Sequence[float],
                   cfg: Optional[OptimizerConfig] = None, perturb: float = config.DEFLATION_PERTURB,
                   step: float = config.DEFLATION_STEP,
                   mode: str = config.DEFLATION_JACOBIAN) -> Dict[Tuple[float, float], List[DeflationRound]]:
    """Independent defmulti runs over every (alpha, beta) pair."""
    runs = {}
    for alpha in alphas:
        for beta in betas:
            logger.info(f"Deflation grid point alpha={alpha} beta={beta}")
            runs[(float(alpha), float(beta))] = defmulti(prob, init, n_def, alpha, beta, cfg, perturb, step, mode)
    return runs
