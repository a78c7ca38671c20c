#!/usr/bin/env python3
"""
Local optimization pipeline for composite polynomial fits.

Each trial draws a N(0, 1) starting vector from its own counter-based
random stream keyed by (seed, trial), runs BFGS with the analytic gradient
and a strong Wolfe line search, then refines with Newton steps on a
central-difference Hessian of that gradient. Newton stops once the
affine-invariant decrement v^T H v (v = H^-1 grad) falls below newton_stop.

The optimizers accept any objective exposing dof, loss(v), gradient(v)
and loss_and_gradient(v); FitProblem is the one used in practice.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.signal import find_peaks

import config
from deeppoly.errors import LineSearchFailure, NonFiniteIntegrand, RankDeficient
from deeppoly.objective import FitProblem, linear_ls_seed
from deeppoly.polynomial import Polynomial
from deeppoly.quadrature import QuadratureRule, gauss_legendre, weighted_sum
from deeppoly.targets import TargetSpec, eval_target

logger = logging.getLogger(__name__)


class Objective(Protocol):
    dof: int

    def loss(self, v) -> float: ...

    def gradient(self, v) -> np.ndarray: ...

    def loss_and_gradient(self, v) -> Tuple[float, np.ndarray]: ...


@dataclass
class OptimizerConfig:
    gtol: float = config.GTOL
    newton_stop: float = config.NEWTON_STOP
    fd_step: float = config.FD_STEP
    max_bfgs_iters: int = config.MAX_BFGS_ITERS
    max_newton_iters: int = config.MAX_NEWTON_ITERS
    n_trials: int = config.DEFAULT_TRIALS
    seed: int = config.DEFAULT_SEED
    threads: int = config.DEFAULT_THREADS
    c1: float = config.WOLFE_C1
    c2: float = config.WOLFE_C2
    max_halvings: int = config.NEWTON_MAX_HALVINGS

    def __post_init__(self):
        for name in ('gtol', 'newton_stop', 'fd_step'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError(f"Wolfe constants need 0 < c1 < c2 < 1, got {self.c1}, {self.c2}")
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be >= 1, got {self.n_trials}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> dict:
        return {
            'gtol': self.gtol,
            'newton_stop': self.newton_stop,
            'fd_step': self.fd_step,
            'max_bfgs_iters': self.max_bfgs_iters,
            'max_newton_iters': self.max_newton_iters,
            'n_trials': self.n_trials,
            'seed': self.seed,
            'c1': self.c1,
            'c2': self.c2,
            'max_halvings': self.max_halvings,
        }


@dataclass
class LocalResult:
    """Outcome of one local optimizer run; x is the parameter vector."""
    x: np.ndarray
    loss: float
    iterations: int
    flags: List[str] = field(default_factory=list)


@dataclass
class TrialRecord:
    """One local run. stream_key is the (seed, trial) pair of its random start, None for a supplied start."""
    trial: int
    stream_key: Optional[Tuple[int, int]]
    error: float
    bfgs_iters: int
    newton_iters: int
    flags: List[str]
    params: np.ndarray

    def to_dict(self) -> dict:
        return {
            'trial': self.trial,
            'stream_key': None if self.stream_key is None else list(self.stream_key),
            'error': self.error,
            'iters': {'bfgs': self.bfgs_iters, 'newton': self.newton_iters},
            'flags': list(self.flags),
            'params': [float(p) for p in self.params],
        }


@dataclass
class FitResult:
    best: np.ndarray
    l2_error: float
    trials: List[TrialRecord]
    wall_time: float = 0.0

    @property
    def errors(self) -> np.ndarray:
        return np.array([t.error for t in self.trials])

    @property
    def stream_keys(self) -> List[Optional[Tuple[int, int]]]:
        return [t.stream_key for t in self.trials]

    @property
    def best_trial(self) -> int:
        return int(np.argmin(self.errors))

    def to_dict(self) -> dict:
        """Result payload without timing, so reruns compare equal."""
        return {
            'l2_error': self.l2_error,
            'best': [float(p) for p in self.best],
            'best_trial': self.best_trial,
            'trials': [t.to_dict() for t in self.trials],
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent Philox stream for one trial; order of execution is irrelevant."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def _evaluate(obj: Objective, x: np.ndarray) -> Tuple[float, np.ndarray]:
    try:
        with np.errstate(all='ignore'):
            value, grad = obj.loss_and_gradient(x)
    except (NonFiniteIntegrand, FloatingPointError, OverflowError):
        return float('inf'), np.full(len(x), np.nan)
    if not np.isfinite(value):
        return float('inf'), np.full(len(x), np.nan)
    return float(value), np.asarray(grad, dtype=float)


def wolfe_line_search(obj: Objective, x: np.ndarray, p: np.ndarray, f0: float, g0: np.ndarray,
                      c1: float, c2: float, alpha1: float = 1.0,
                      max_iters: int = config.LINE_SEARCH_MAX_ITERS) -> Tuple[float, float, np.ndarray]:
    """Find a step satisfying the strong Wolfe conditions along p.

    Returns:
        (alpha, f(x + alpha p), grad(x + alpha p))

    Raises:
        LineSearchFailure: if no acceptable step was found
    """
    dphi0 = float(g0 @ p)
    if not dphi0 < 0:
        raise LineSearchFailure("Search direction is not a descent direction")

    def phi(alpha):
        f, g = _evaluate(obj, x + alpha * p)
        dphi = float(g @ p) if np.isfinite(f) else float('nan')
        return f, g, dphi

    def zoom(lo, hi, f_lo, f_hi, dphi_lo):
        for _ in range(max_iters):
            delta = hi - lo
            alpha = None
            if np.isfinite(f_hi):
                denom = 2.0 * (f_hi - f_lo - dphi_lo * delta)
                if denom != 0.0:
                    alpha = lo - dphi_lo * delta * delta / denom
            low, high = sorted((lo + 0.1 * delta, hi - 0.1 * delta))
            if alpha is None or not np.isfinite(alpha) or not low <= alpha <= high:
                alpha = lo + 0.5 * delta
            f_a, g_a, dphi_a = phi(alpha)
            if f_a > f0 + c1 * alpha * dphi0 or f_a >= f_lo:
                hi, f_hi = alpha, f_a
            else:
                if abs(dphi_a) <= -c2 * dphi0:
                    return alpha, f_a, g_a
                if dphi_a * (hi - lo) >= 0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, dphi_lo = alpha, f_a, dphi_a
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchFailure("Zoom phase did not find a strong Wolfe step")

    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = alpha1
    for i in range(max_iters):
        f_a, g_a, dphi_a = phi(alpha)
        if f_a > f0 + c1 * alpha * dphi0 or (i > 0 and f_a >= f_prev):
            return zoom(alpha_prev, alpha, f_prev, f_a, dphi_prev)
        if abs(dphi_a) <= -c2 * dphi0:
            return alpha, f_a, g_a
        if dphi_a >= 0:
            return zoom(alpha, alpha_prev, f_a, f_prev, dphi_a)
        alpha_prev, f_prev, dphi_prev = alpha, f_a, dphi_a
        alpha = 2.0 * alpha
    raise LineSearchFailure("Bracketing phase did not terminate")


def bfgs_minimize(obj: Objective, x0, cfg: OptimizerConfig) -> LocalResult:
    """Inverse-Hessian BFGS until ||grad||_inf <= gtol or max iterations.

    A line-search failure along a quasi-Newton direction resets the inverse
    Hessian and retries steepest descent once. A second consecutive failure
    ends the run at the best iterate so far, flagged 'line_search_failure'
    (usually the loss has hit rounding level).
    """
    x = np.array(x0, dtype=float)
    n = len(x)
    f, g = _evaluate(obj, x)
    flags: List[str] = []
    if not np.isfinite(f):
        return LocalResult(x=x, loss=f, iterations=0, flags=['diverged'])

    H = np.eye(n)
    first = True
    restarted = False
    k = 0
    for k in range(cfg.max_bfgs_iters):
        if np.max(np.abs(g)) <= cfg.gtol:
            break
        p = -H @ g
        if not g @ p < 0:
            H = np.eye(n)
            p = -g
        alpha1 = min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-300)) if first else 1.0
        try:
            alpha, f_new, g_new = wolfe_line_search(obj, x, p, f, g, cfg.c1, cfg.c2, alpha1=alpha1)
        except LineSearchFailure as exc:
            if not first and not restarted:
                logger.debug(f"BFGS iteration {k}: {exc}; restarting from steepest descent")
                H = np.eye(n)
                first = True
                restarted = True
                continue
            logger.debug(f"BFGS iteration {k}: {exc}")
            flags.append('line_search_failure')
            break
        restarted = False
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        if first and sy > 0:
            H = np.eye(n) * (sy / float(y @ y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        first = False
        x, f, g = x + s, f_new, g_new
        logger.debug(f"BFGS iteration {k}: loss={f:.6e} |grad|={np.max(np.abs(g)):.3e}")
    else:
        k = cfg.max_bfgs_iters
    return LocalResult(x=x, loss=f, iterations=k, flags=flags)


def fd_hessian(obj: Objective, x: np.ndarray, fd_step: float) -> np.ndarray:
    """Symmetrized central differences of the analytic gradient.

    A column whose gradient evaluation fails is NaN; solve_newton_system
    then reports the matrix as singular.
    """
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        h = fd_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        try:
            with np.errstate(all='ignore'):
                H[:, i] = (obj.gradient(xp) - obj.gradient(xm)) / (2.0 * h)
        except (NonFiniteIntegrand, FloatingPointError, OverflowError):
            H[:, i] = np.nan
    return 0.5 * (H + H.T)


def solve_newton_system(H: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Solve H v = g by LU; fall back to least squares when H is singular.

    Returns:
        (v, singular)
    """
    if not np.all(np.isfinite(H)):
        return np.full(len(g), np.nan), True
    try:
        lu, piv = scipy.linalg.lu_factor(H, check_finite=False)
        if np.any(np.diag(lu) == 0.0):
            raise np.linalg.LinAlgError("zero pivot")
        v = scipy.linalg.lu_solve((lu, piv), g, check_finite=False)
        if np.all(np.isfinite(v)):
            return v, False
    except (np.linalg.LinAlgError, ValueError):
        pass
    v, *_ = np.linalg.lstsq(H, g, rcond=None)
    return v, True


def newton_refine(obj: Objective, x0, cfg: OptimizerConfig) -> LocalResult:
    """Newton steps x <- x - t * H^-1 grad with step halving; never increases the loss."""
    x = np.array(x0, dtype=float)
    f, g = _evaluate(obj, x)
    flags: List[str] = []
    if not np.isfinite(f):
        return LocalResult(x=x, loss=f, iterations=0, flags=['diverged'])

    it = 0
    for it in range(cfg.max_newton_iters):
        H = fd_hessian(obj, x, cfg.fd_step)
        v, singular = solve_newton_system(H, g)
        if singular:
            if 'singular_hessian' not in flags:
                flags.append('singular_hessian')
            if not np.all(np.isfinite(v)):
                break
        decrement = float(v @ H @ v)
        logger.debug(f"Newton iteration {it}: loss={f:.6e} vHv={decrement:.3e}")
        if abs(decrement) < cfg.newton_stop:
            break
        t = 1.0
        for _ in range(cfg.max_halvings + 1):
            candidate = x - t * v
            f_new, g_new = _evaluate(obj, candidate)
            if f_new <= f:
                break
            t *= 0.5
        else:
            flags.append('newton_stalled')
            break
        x, f, g = candidate, f_new, g_new
    else:
        it = cfg.max_newton_iters
    return LocalResult(x=x, loss=f, iterations=it, flags=flags)


def run_trial(obj: Objective, x0, cfg: OptimizerConfig, trial: int = 0,
              stream_key: Optional[Tuple[int, int]] = None) -> TrialRecord:
    """BFGS then Newton from x0; error is sqrt(2F), +inf when the run diverged."""
    stage1 = bfgs_minimize(obj, x0, cfg)
    stage2 = newton_refine(obj, stage1.x, cfg)
    flags = stage1.flags + stage2.flags
    error = float(np.sqrt(2.0 * stage2.loss)) if np.isfinite(stage2.loss) and stage2.loss >= 0 else float('inf')
    if not np.isfinite(error) and 'diverged' not in flags:
        flags.append('diverged')
    return TrialRecord(
        trial=trial,
        stream_key=stream_key,
        error=error,
        bfgs_iters=stage1.iterations,
        newton_iters=stage2.iterations,
        flags=flags,
        params=stage2.x,
    )


def random_start(obj: Objective, seed: int, trial: int) -> np.ndarray:
    """The N(0, 1) starting vector of one trial."""
    return trial_rng(seed, trial).standard_normal(obj.dof)


def replay_trial(obj: Objective, cfg: OptimizerConfig, stream_key: Tuple[int, int]) -> TrialRecord:
    """Rerun a single random trial from its recorded (seed, trial) key."""
    seed, trial = (int(k) for k in stream_key)
    return run_trial(obj, random_start(obj, seed, trial), cfg, trial=trial, stream_key=(seed, trial))


def _random_trial(obj: Objective, cfg: OptimizerConfig, trial: int) -> TrialRecord:
    key = (int(cfg.seed), int(trial))
    record = run_trial(obj, random_start(obj, *key), cfg, trial=trial, stream_key=key)
    logger.debug(f"Trial {trial}: error={record.error:.6e} flags={record.flags}")
    return record


def fit_deep(obj: Objective, cfg: OptimizerConfig, extra_starts: Sequence[np.ndarray] = ()) -> FitResult:
    """Random-restart fit: n_trials seeded N(0,1) starts plus any extra starts.

    Extra starts are numbered after the random trials. The best trial is the
    first one attaining the minimum error.
    """
    start = time.perf_counter()
    if cfg.threads > 1 and cfg.n_trials > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            records = list(pool.map(lambda t: _random_trial(obj, cfg, t), range(cfg.n_trials)))
    else:
        records = [_random_trial(obj, cfg, t) for t in range(cfg.n_trials)]
    for offset, x0 in enumerate(extra_starts):
        records.append(run_trial(obj, x0, cfg, trial=cfg.n_trials + offset))

    errors = np.array([r.error for r in records])
    best = int(np.argmin(errors))
    elapsed = time.perf_counter() - start
    logger.info(f"fit_deep: best error {errors[best]:.6e} (trial {best}) over {len(records)} trials in {elapsed:.2f}s")
    return FitResult(best=records[best].params, l2_error=float(errors[best]), trials=records, wall_time=elapsed)


def fit_linear_ls(degree: int, target: TargetSpec, rule: QuadratureRule) -> Tuple[Polynomial, float]:
    """Quadrature-weighted least squares over degree-d polynomials, via QR.

    Raises:
        RankDeficient: if degree + 1 > m or the weighted Vandermonde is rank deficient
    """
    n = int(degree) + 1
    if n < 1 or n > rule.m:
        raise RankDeficient(f"Degree {degree} needs {n} coefficients but the rule has {rule.m} nodes")
    sqrt_w = np.sqrt(rule.weights)
    f = np.asarray(eval_target(target, rule.nodes), dtype=float)
    vander = np.vander(rule.nodes, n, increasing=True)
    Q, R = np.linalg.qr(sqrt_w[:, None] * vander)
    diag = np.abs(np.diag(R))
    if diag.min() <= np.finfo(float).eps * n * diag.max():
        raise RankDeficient(f"Weighted Vandermonde of degree {degree} is rank deficient")
    coeffs = scipy.linalg.solve_triangular(R, Q.T @ (sqrt_w * f))
    residual = f - vander @ coeffs
    return Polynomial(coeffs), float(np.sqrt(weighted_sum(residual * residual, rule)))


@dataclass
class SweepCell:
    deg_q: int
    deg_p: int
    error: float
    ls_error: float
    relative_error: float
    n_success: int

    def to_dict(self) -> dict:
        return {
            'deg_q': self.deg_q,
            'deg_p': self.deg_p,
            'error': self.error,
            'ls_error': self.ls_error,
            'relative_error': self.relative_error,
            'n_success': self.n_success,
        }


def parameter_sweep(total_coeffs: int, target: TargetSpec, cfg: OptimizerConfig,
                    rule: QuadratureRule = None) -> List[SweepCell]:
    """Two-layer fits at fixed degrees of freedom N, for every split d + e = N.

    Row deg_p = 0 is the single-layer baseline (relative error 1). The
    endpoint cells (e = 1 and d = 1) also start from the linear
    least-squares coefficients mapped into the two-layer parameters.
    """
    n = int(total_coeffs)
    if n < 2:
        raise ValueError(f"A sweep needs at least 2 degrees of freedom, got {n}")
    if rule is None:
        rule = gauss_legendre()
    ls_poly, ls_error = fit_linear_ls(n - 1, target, rule)
    cells = [SweepCell(deg_q=n - 1, deg_p=0, error=ls_error, ls_error=ls_error, relative_error=1.0, n_success=1)]

    for e in range(1, n):
        d = n - e
        prob = FitProblem(target=target, signature=(d + 1, e + 1), rule=rule)
        starts = []
        try:
            if e == 1:
                starts.append(linear_ls_seed(ls_poly.coeffs, outer_degree=d))
            if d == 1 and e != 1:
                starts.append(linear_ls_seed(ls_poly.coeffs, outer_degree=1))
        except ValueError as exc:
            logger.warning(f"Sweep cell deg_q={d} deg_p={e}: no linear seed ({exc})")
        result = fit_deep(prob, cfg, extra_starts=starts)
        n_success = sum(1 for t in result.trials if np.isfinite(t.error) and 'diverged' not in t.flags)
        relative = result.l2_error / ls_error if ls_error > 0 else float('nan')
        logger.info(f"Sweep cell deg_q={d} deg_p={e}: error={result.l2_error:.6e} relative={relative:.4f}")
        cells.append(SweepCell(deg_q=d, deg_p=e, error=result.l2_error, ls_error=ls_error,
                               relative_error=relative, n_success=n_success))
    return cells


def _cluster(params: List[np.ndarray], tol: float) -> List[int]:
    labels = list(range(len(params)))

    def find(i):
        while labels[i] != i:
            labels[i] = labels[labels[i]]
            i = labels[i]
        return i

    for i in range(len(params)):
        for j in range(i + 1, len(params)):
            scale = max(np.linalg.norm(params[i]), np.linalg.norm(params[j]), 1.0)
            if np.linalg.norm(params[i] - params[j]) <= tol * scale:
                labels[find(j)] = find(i)
    roots = [find(i) for i in range(len(params))]
    relabel: Dict[int, int] = {}
    return [relabel.setdefault(r, len(relabel)) for r in roots]


def ensemble_stats(result: FitResult, n_top: int = config.ENSEMBLE_TOP, cluster_tol: float = config.CLUSTER_TOL,
                   n_bins: int = config.HISTOGRAM_BINS) -> dict:
    """Summarize a random-restart ensemble.

    Returns a dict with the sorted top-n trials and their cluster labels
    (single linkage at relative parameter distance cluster_tol), a
    log-spaced histogram of the finite positive errors, the number of
    histogram modes, and the relative gap between the two best errors.
    """
    order = sorted(range(len(result.trials)), key=lambda i: (result.trials[i].error, i))
    finite = [i for i in order if np.isfinite(result.trials[i].error)]
    top = finite[:max(int(n_top), 0)]
    labels = _cluster([result.trials[i].params for i in top], cluster_tol)

    positive = np.array([result.trials[i].error for i in finite if result.trials[i].error > 0])
    if len(positive):
        lo, hi = np.log10(positive.min()), np.log10(positive.max())
        spread = hi - lo >= 1e-9
        if not spread:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.logspace(lo, hi, n_bins + 1)
        if spread:
            # pin the outer edges so the extremes always fall inside
            edges[0], edges[-1] = positive.min(), positive.max()
        counts, edges = np.histogram(positive, bins=edges)
        peaks, _ = find_peaks(np.concatenate(([0], counts, [0])))
        n_modes = len(peaks)
    else:
        counts, edges, n_modes = np.zeros(0, dtype=int), np.zeros(0), 0

    best_gap = float('nan')
    if len(finite) >= 2:
        e0, e1 = result.trials[finite[0]].error, result.trials[finite[1]].error
        best_gap = (e1 - e0) / e1 if e1 > 0 else 0.0

    return {
        'n_trials': len(result.trials),
        'n_finite': len(finite),
        'top': [
            {'rank': rank, 'trial': result.trials[i].trial, 'error': result.trials[i].error, 'cluster': label}
            for rank, (i, label) in enumerate(zip(top, labels))
        ],
        'n_clusters': len(set(labels)),
        'histogram': {'edges': [float(e) for e in edges], 'counts': [int(c) for c in counts]},
        'n_modes': n_modes,
        'best_vs_second': best_gap,
    }
