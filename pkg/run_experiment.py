#!/usr/bin/env python3
"""
Run composite polynomial experiments and write their results to disk.

Subcommands:
  fit          random-restart fit of one composite type (optionally vs linear LS)
  sweep        two-layer fits at fixed degrees of freedom over every split
  ensemble     large random-restart fit plus error histogram and clustering
  deflate      deflated Newton search for further local minima
  absapprox    Newton-iteration composites for |x|: convergence trace and curves
  conformal    pole report and mapped equispaced interpolation study
  losssurface  grid of the two-parameter simplified loss
  quadrature   dump the Gauss-Legendre rule

Usage:
  python run_experiment.py fit --target runge:a=25 --sig 5,5 --trials 10 --seed 7 --baseline
  python run_experiment.py deflate --preset deflation_bessel0
  python run_experiment.py conformal --a 25

Every run writes <outdir>/run.json (a RunRecord) and CSV files next to it.
Flags not given on the command line are taken from --preset (experiments.yaml),
then from the defaults in config.py.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import yaml

import config
from deeppoly.conformal import (
    MapSpec,
    convergence_study,
    eval_interpolant,
    interpolate_mapped,
    map_comparison,
    pole_report,
    runge_region_crossing,
)
from deeppoly.deflation import defmulti, deflation_grid
from deeppoly.errors import ConfigError, DeepPolyError, InvalidOrder, NumericalFailure
from deeppoly.newton_compose import NewtonIterate, abs_approx, convergence_trace, sign_approx
from deeppoly.objective import FitProblem, residual_curve, simplified_loss_surface
from deeppoly.optimizer import (
    FitResult,
    OptimizerConfig,
    ensemble_stats,
    fit_deep,
    fit_linear_ls,
    parameter_sweep,
    random_start,
)
from deeppoly.quadrature import gauss_legendre
from deeppoly.targets import parse_target
from output_helper import format_run_name, write_csv
from run_record import RunRecord

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# Built-in defaults per subcommand, applied after the preset
DEFAULTS: Dict[str, Dict[str, object]] = {
    'fit': {'trials': config.DEFAULT_TRIALS, 'seed': config.DEFAULT_SEED, 'm': config.QUADRATURE_POINTS,
            'baseline': False, 'unnormalized': False},
    'sweep': {'trials': config.DEFAULT_TRIALS, 'seed': config.DEFAULT_SEED, 'm': config.QUADRATURE_POINTS},
    'ensemble': {'trials': 200, 'seed': config.DEFAULT_SEED, 'm': config.QUADRATURE_POINTS,
                 'top': config.ENSEMBLE_TOP, 'bins': config.HISTOGRAM_BINS},
    'deflate': {'seed': config.DEFAULT_SEED, 'm': config.QUADRATURE_POINTS, 'n_def': 1,
                'alpha': [config.DEFLATION_ALPHA], 'beta': [config.DEFLATION_BETA],
                'perturb': config.DEFLATION_PERTURB, 'step': config.DEFLATION_STEP,
                'jacobian': config.DEFLATION_JACOBIAN},
    'absapprox': {'k_max': config.ABS_MAX_K, 'k': 4, 'points': config.ABS_GRID_POINTS},
    'conformal': {'a': config.CONFORMAL_RUNGE_A, 'n': list(config.CONFORMAL_N_LIST), 'm': config.QUADRATURE_POINTS},
    'losssurface': {'a_range': [-2.0, 2.0], 'b_range': [-1.0, 1.0], 'resolution': 81, 'm': config.QUADRATURE_POINTS},
    'quadrature': {'m': config.QUADRATURE_POINTS},
}

REQUIRED = {
    'fit': ('target', 'sig'),
    'sweep': ('target', 'total'),
    'ensemble': ('target', 'sig'),
    'deflate': ('target', 'sig'),
}


def _int_list(value) -> List[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).split(',') if v.strip()]


def _float_list(value) -> List[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(',') if v.strip()]


def load_presets(path: str) -> dict:
    """Read the presets mapping from a YAML file.

    Raises:
        ConfigError: if the file is missing or malformed
    """
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot read presets file {path}: {exc}") from exc
    presets = data.get('presets', {})
    if not isinstance(presets, dict):
        raise ConfigError(f"'presets' in {path} must be a mapping")
    return presets


def resolve_threads(flag: Optional[int]) -> int:
    """--threads, then $DEEPPOLY_THREADS, then the configured default."""
    if flag is not None:
        threads = flag
    else:
        raw = os.environ.get(config.THREADS_ENV_VAR)
        if raw is None or not raw.strip():
            return config.DEFAULT_THREADS
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{config.THREADS_ENV_VAR}={raw!r} is not an integer") from exc
    if threads < 1:
        raise ConfigError(f"Thread count must be >= 1, got {threads}")
    return threads


def resolve_args(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the preset, then from DEFAULTS; coerce list-valued flags.

    Raises:
        ConfigError: unknown preset, preset for another subcommand, unknown keys, missing required flags
    """
    sub = args.command
    if args.preset:
        presets = load_presets(args.presets_file)
        if args.preset not in presets:
            raise ConfigError(f"Unknown preset {args.preset!r} in {args.presets_file}")
        preset = dict(presets[args.preset])
        preset_sub = preset.pop('subcommand', sub)
        if preset_sub != sub:
            raise ConfigError(f"Preset {args.preset!r} is for '{preset_sub}', not '{sub}'")
        for key, value in preset.items():
            if not hasattr(args, key):
                raise ConfigError(f"Preset {args.preset!r} sets unknown option {key!r} for '{sub}'")
            if getattr(args, key) is None:
                setattr(args, key, value)
    for key, value in DEFAULTS.get(sub, {}).items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key in REQUIRED.get(sub, ()):
        if getattr(args, key, None) is None:
            raise ConfigError(f"'{sub}' needs --{key.replace('_', '-')} (or a preset that sets it)")

    try:
        for key in ('sig', 'n'):
            if getattr(args, key, None) is not None:
                setattr(args, key, _int_list(getattr(args, key)))
        for key in ('init', 'alpha', 'beta', 'a_range', 'b_range'):
            if getattr(args, key, None) is not None:
                setattr(args, key, _float_list(getattr(args, key)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Malformed list option: {exc}") from exc
    for key in ('a_range', 'b_range'):
        if getattr(args, key, None) is not None and len(getattr(args, key)) != 2:
            raise ConfigError(f"--{key.replace('_', '-')} needs two values lo,hi")

    args.threads = resolve_threads(args.threads)
    if args.outdir is None:
        label = getattr(args, 'target', None) or args.preset or ''
        args.outdir = os.path.join(config.OUTPUT_DIR, format_run_name(f"{sub}_{label}"))
    return args


def _rule(args):
    try:
        return gauss_legendre(int(args.m))
    except InvalidOrder as exc:
        raise ConfigError(str(exc)) from exc


def _optimizer_config(args, n_trials: int) -> OptimizerConfig:
    try:
        return OptimizerConfig(n_trials=n_trials, seed=int(args.seed), threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _problem(args, signature, normalized: bool = True) -> FitProblem:
    try:
        return FitProblem(target=parse_target(args.target), signature=tuple(signature),
                          rule=_rule(args), normalized=normalized)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _require_success(result: FitResult):
    if not np.isfinite(result.l2_error):
        raise NumericalFailure(f"All {len(result.trials)} trials diverged")


def _curve_table(v, prob: FitProblem) -> pd.DataFrame:
    xs = np.linspace(-1.0, 1.0, config.CURVE_POINTS)
    f, g = residual_curve(v, prob, xs)
    return pd.DataFrame({'x': xs, 'f': f, 'g': g, 'residual': f - g})


def _trials_table(result: FitResult) -> pd.DataFrame:
    return pd.DataFrame([
        {'trial': t.trial, 'stream_key': '' if t.stream_key is None else f"{t.stream_key[0]}:{t.stream_key[1]}",
         'error': t.error, 'bfgs_iters': t.bfgs_iters,
         'newton_iters': t.newton_iters, 'flags': ';'.join(t.flags)}
        for t in result.trials
    ])


def cmd_fit(args) -> RunRecord:
    prob = _problem(args, args.sig, normalized=not args.unnormalized)
    cfg = _optimizer_config(args, int(args.trials))
    logger.info(f"Fitting {prob.target.describe()} with signature {prob.signature} ({prob.dof} dof)")
    result = fit_deep(prob, cfg)
    _require_success(result)

    results = {'fit': result.to_dict(), 'composite': prob.unpack(result.best).to_json()}
    if args.baseline:
        degree = int(args.baseline_degree) if args.baseline_degree is not None else prob.dof - 1
        ls_poly, ls_error = fit_linear_ls(degree, prob.target, prob.rule)
        results['baseline'] = {'degree': degree, 'l2_error': ls_error, 'coeffs': list(ls_poly.coeffs)}
        logger.info(f"Deep error {result.l2_error:.6e} vs linear degree {degree} error {ls_error:.6e}")

    write_csv(os.path.join(args.outdir, 'curve.csv'), _curve_table(result.best, prob))
    write_csv(os.path.join(args.outdir, 'trials.csv'), _trials_table(result))
    run_config = dict(prob.describe(), optimizer=cfg.to_dict())
    return RunRecord(subcommand='fit', config=run_config, results=results)


def cmd_sweep(args) -> RunRecord:
    target = parse_target(args.target)
    cfg = _optimizer_config(args, int(args.trials))
    rule = _rule(args)
    try:
        cells = parameter_sweep(int(args.total), target, cfg, rule)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if all(not np.isfinite(c.error) for c in cells[1:]):
        raise NumericalFailure("Every sweep cell diverged")
    table = pd.DataFrame([c.to_dict() for c in cells])
    write_csv(os.path.join(args.outdir, 'sweep.csv'), table)
    run_config = {'target': target.describe(), 'total': int(args.total), 'quadrature_points': rule.m,
                  'optimizer': cfg.to_dict()}
    return RunRecord(subcommand='sweep', config=run_config, results={'cells': [c.to_dict() for c in cells]})


def cmd_ensemble(args) -> RunRecord:
    prob = _problem(args, args.sig)
    cfg = _optimizer_config(args, int(args.trials))
    result = fit_deep(prob, cfg)
    _require_success(result)
    stats = ensemble_stats(result, n_top=int(args.top), n_bins=int(args.bins))

    edges = stats['histogram']['edges']
    hist = pd.DataFrame({'edge_lo': edges[:-1], 'edge_hi': edges[1:], 'count': stats['histogram']['counts']})
    write_csv(os.path.join(args.outdir, 'histogram.csv'), hist)
    top_rows = []
    for row in stats['top']:
        params = result.trials[row['trial']].params
        entry = dict(row)
        entry.update({f"c{i}": float(p) for i, p in enumerate(params)})
        top_rows.append(entry)
    write_csv(os.path.join(args.outdir, 'top.csv'), pd.DataFrame(top_rows))
    write_csv(os.path.join(args.outdir, 'trials.csv'), _trials_table(result))
    logger.info(f"Ensemble: best {result.l2_error:.6e}, {stats['n_modes']} histogram modes, "
                f"{stats['n_clusters']} clusters in the top {len(stats['top'])}")
    run_config = dict(prob.describe(), optimizer=cfg.to_dict())
    return RunRecord(subcommand='ensemble', config=run_config,
                     results={'l2_error': result.l2_error, 'stats': stats, 'fit': result.to_dict()})


def cmd_deflate(args) -> RunRecord:
    prob = _problem(args, args.sig)
    cfg = _optimizer_config(args, 1)
    if args.init is not None:
        init = np.asarray(args.init, dtype=float)
        if len(init) != prob.dof:
            raise ConfigError(f"--init has {len(init)} values, signature {prob.signature} needs {prob.dof}")
    else:
        init = random_start(prob, cfg.seed, 0)

    try:
        if len(args.alpha) == 1 and len(args.beta) == 1:
            runs = {(args.alpha[0], args.beta[0]): defmulti(
                prob, init, int(args.n_def), args.alpha[0], args.beta[0], cfg,
                perturb=float(args.perturb), step=float(args.step), mode=args.jacobian)}
        else:
            runs = deflation_grid(prob, init, int(args.n_def), args.alpha, args.beta, cfg,
                                  perturb=float(args.perturb), step=float(args.step), mode=args.jacobian)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    payload = []
    trace_rows = []
    for (alpha, beta), rounds in runs.items():
        payload.append({'alpha': alpha, 'beta': beta, 'rounds': [r.to_dict() for r in rounds]})
        for r in rounds:
            trace_rows.append({'alpha': alpha, 'beta': beta, 'round': r.index, 'error': r.error,
                               'duplicate': r.duplicate, 'flags': ';'.join(r.flags)})
            name = format_run_name(f"curve_a{alpha:g}_b{beta:g}_round{r.index}")
            write_csv(os.path.join(args.outdir, name + '.csv'), _curve_table(r.root, prob))
    if all(not np.isfinite(row['error']) for row in trace_rows):
        raise NumericalFailure("Every deflation round diverged")
    write_csv(os.path.join(args.outdir, 'rounds.csv'), pd.DataFrame(trace_rows))

    run_config = dict(prob.describe(), optimizer=cfg.to_dict(),
                      deflation={'init': [float(v) for v in init], 'n_def': int(args.n_def),
                                 'alpha': list(args.alpha), 'beta': list(args.beta),
                                 'perturb': float(args.perturb), 'step': float(args.step),
                                 'jacobian': args.jacobian})
    return RunRecord(subcommand='deflate', config=run_config, results={'runs': payload})


def cmd_absapprox(args) -> RunRecord:
    k_max, k = int(args.k_max), int(args.k)
    if k_max < 0 or k < 0:
        raise ConfigError("--k-max and --k must be non-negative")
    xs = np.linspace(-1.0, 1.0, int(args.points))
    xs = xs[xs != 0.0]
    trace = convergence_trace(k_max, xs)
    write_csv(os.path.join(args.outdir, 'trace.csv'), trace)

    grid = np.linspace(-1.0, 1.0, config.CURVE_POINTS)
    curve = pd.DataFrame({'x': grid, 'abs': np.abs(grid), 'abs_approx': abs_approx(k, grid),
                          'sign_approx': sign_approx(k, grid)})
    write_csv(os.path.join(args.outdir, f'curve_k{k}.csv'), curve)

    settled = trace[(trace['r'] >= 0.5) & (trace['error'] > 1e-4) & trace['ratio'].notna()]
    sup_error = trace.groupby('k')['error'].max()
    results = {
        'degrees': [NewtonIterate(p=2, k=j, x_power=2).degree for j in range(k_max + 1)],
        'sup_error': [float(sup_error[j]) for j in range(k_max + 1)],
        'max_ratio_settled': float(settled['ratio'].max()) if len(settled) else None,
        'curve_sup_error': float(np.max(np.abs(curve['abs_approx'] - curve['abs']))),
    }
    return RunRecord(subcommand='absapprox', config={'k_max': k_max, 'k': k, 'points': int(args.points)},
                     results=results)


def cmd_conformal(args) -> RunRecord:
    a = float(args.a)
    if not a > 0:
        raise ConfigError(f"--a must be positive, got {a}")
    rule = _rule(args)
    target = parse_target(f"runge:a={a!r}")
    report = pole_report(a)
    crossing = runge_region_crossing()
    logger.info(f"Runge region crosses the imaginary axis at {crossing:.11f}i")

    studies = {}
    for kind in ('identity', 'cubic', 'cosine'):
        study = convergence_study(target, MapSpec(kind), args.n, rule)
        write_csv(os.path.join(args.outdir, f'convergence_{kind}.csv'), study)
        studies[kind] = study.to_dict(orient='records')
    table = map_comparison(target, args.n, rule)
    write_csv(os.path.join(args.outdir, 'comparison.csv'), table)

    n_last = int(args.n[-1])
    grid = np.linspace(-1.0, 1.0, config.CURVE_POINTS)
    curves = {'x': grid, 'f': target(grid)}
    for kind in ('identity', 'cubic', 'cosine'):
        mapping = MapSpec(kind)
        curves[kind] = eval_interpolant(interpolate_mapped(target, mapping, n_last), mapping, grid)
    write_csv(os.path.join(args.outdir, f'curves_n{n_last}.csv'), pd.DataFrame(curves))

    return RunRecord(subcommand='conformal', config={'a': a, 'n': list(args.n), 'quadrature_points': rule.m},
                     results={'poles': report, 'runge_crossing': crossing, 'studies': studies})


def cmd_losssurface(args) -> RunRecord:
    target = parse_target(args.target or 'bessel:n=40,c=30,s=1')
    n = int(args.resolution)
    if n < 2:
        raise ConfigError(f"--resolution must be >= 2, got {n}")
    rule = _rule(args)
    a_values = np.linspace(args.a_range[0], args.a_range[1], n)
    b_values = np.linspace(args.b_range[0], args.b_range[1], n)
    grid = simplified_loss_surface(target, a_values, b_values, rule)
    bb, aa = np.meshgrid(b_values, a_values, indexing='ij')
    write_csv(os.path.join(args.outdir, 'surface.csv'),
              pd.DataFrame({'a1': aa.ravel(), 'b1': bb.ravel(), 'loss': grid.ravel()}))
    i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
    results = {'min_loss': float(grid[i, j]), 'argmin': {'a1': float(a_values[j]), 'b1': float(b_values[i])},
               'shape': [n, n]}
    run_config = {'target': target.describe(), 'a_range': list(args.a_range), 'b_range': list(args.b_range),
                  'resolution': n, 'quadrature_points': rule.m}
    return RunRecord(subcommand='losssurface', config=run_config, results=results)


def cmd_quadrature(args) -> RunRecord:
    rule = _rule(args)
    write_csv(os.path.join(args.outdir, 'rule.csv'), pd.DataFrame({'node': rule.nodes, 'weight': rule.weights}))
    return RunRecord(subcommand='quadrature', config={'quadrature_points': rule.m},
                     results={'m': rule.m, 'weight_sum': float(np.sum(rule.weights))})


COMMANDS = {
    'fit': cmd_fit,
    'sweep': cmd_sweep,
    'ensemble': cmd_ensemble,
    'deflate': cmd_deflate,
    'absapprox': cmd_absapprox,
    'conformal': cmd_conformal,
    'losssurface': cmd_losssurface,
    'quadrature': cmd_quadrature,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Composite polynomial approximation experiments')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--preset', help='Named preset from the presets file')
    common.add_argument('--presets-file', default=config.PRESETS_FILE, help='YAML presets file')
    common.add_argument('--outdir', help='Output directory (default runs/<subcommand>_<target>)')
    common.add_argument('--threads', type=int, help=f'Worker threads (default ${config.THREADS_ENV_VAR} or 1)')
    common.add_argument('--verbose', action='store_true', help='Debug logging')
    common.add_argument('--m', type=int, help='Gauss-Legendre points')

    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('fit', parents=[common], help='Random-restart composite fit')
    p.add_argument('--target', help='Target, e.g. runge:a=25 or bessel:n=0,c=10')
    p.add_argument('--sig', help='Coefficients per layer, outermost first, e.g. 5,5')
    p.add_argument('--trials', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--baseline', action='store_true', default=None, help='Also fit linear least squares')
    p.add_argument('--baseline-degree', type=int, help='Baseline degree (default dof - 1)')
    p.add_argument('--unnormalized', action='store_true', default=None, help='Fit every coefficient')

    p = sub.add_parser('sweep', parents=[common], help='Fixed-dof sweep over the inner degree')
    p.add_argument('--target')
    p.add_argument('--total', type=int, help='Total degrees of freedom N')
    p.add_argument('--trials', type=int)
    p.add_argument('--seed', type=int)

    p = sub.add_parser('ensemble', parents=[common], help='Large random-restart ensemble')
    p.add_argument('--target')
    p.add_argument('--sig')
    p.add_argument('--trials', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--top', type=int, help='Number of best trials to report')
    p.add_argument('--bins', type=int, help='Histogram bins')

    p = sub.add_parser('deflate', parents=[common], help='Deflated search for further minima')
    p.add_argument('--target')
    p.add_argument('--sig')
    p.add_argument('--init', help='Comma-separated start vector (default: N(0,1) from --seed)')
    p.add_argument('--n-def', type=int, help='Deflation rounds after the first fit')
    p.add_argument('--alpha', help='Deflation power, or a comma list for a grid')
    p.add_argument('--beta', help='Deflation shift, or a comma list for a grid')
    p.add_argument('--perturb', type=float)
    p.add_argument('--step', type=float)
    p.add_argument('--jacobian', choices=config.VALID_JACOBIAN_MODES)
    p.add_argument('--seed', type=int)

    p = sub.add_parser('absapprox', parents=[common], help='Newton composites for |x|')
    p.add_argument('--k-max', type=int)
    p.add_argument('--k', type=int, help='Iterate to sample on the curve grid')
    p.add_argument('--points', type=int, help='Trace grid size on [-1, 1]')

    p = sub.add_parser('conformal', parents=[common], help='Mapped equispaced interpolation of the Runge function')
    p.add_argument('--a', type=float, help='Runge parameter')
    p.add_argument('--n', help='Comma list of interpolation degrees')

    p = sub.add_parser('losssurface', parents=[common], help='Simplified two-parameter loss grid')
    p.add_argument('--target')
    p.add_argument('--a-range', help='lo,hi for a1')
    p.add_argument('--b-range', help='lo,hi for b1')
    p.add_argument('--resolution', type=int)

    sub.add_parser('quadrature', parents=[common], help='Write the Gauss-Legendre nodes and weights')
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand, save its record; returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else getattr(logging, config.LOG_LEVEL))
    try:
        args = resolve_args(args)
        start = time.perf_counter()
        record = COMMANDS[args.command](args)
        record.timing = {'wall_time': time.perf_counter() - start}
        record.save(os.path.join(args.outdir, 'run.json'))
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except DeepPolyError as exc:
        logger.error(f"Numerical failure: {exc}")
        return EXIT_NUMERICAL
    logger.info(f"Run complete: {args.outdir}")
    return EXIT_OK


def main():
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    sys.exit(run())


if __name__ == '__main__':
    main()
