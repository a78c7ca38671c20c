#!/usr/bin/env python3
"""
Shared configuration for composite polynomial approximation experiments
"""

import os

# Quadrature (Gauss-Legendre) used for every loss and L2 error
QUADRATURE_POINTS = 100
MAX_QUADRATURE_POINTS = 1000
QUADRATURE_NEWTON_TOL = 1e-15
QUADRATURE_NEWTON_MAX_ITERS = 100

# Largest degree we are willing to expand a composite into monomial form
DEGREE_CAP = 512

# BFGS settings
GTOL = 1e-12  # sup-norm of the gradient
MAX_BFGS_ITERS = 2000
WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9
LINE_SEARCH_MAX_ITERS = 50

# Newton refinement with a finite-difference Hessian
NEWTON_STOP = 1e-14  # stop once v^T H v drops below this
MAX_NEWTON_ITERS = 50
NEWTON_MAX_HALVINGS = 10
FD_STEP = 1e-5  # relative central-difference step: h_i = FD_STEP * max(1, |x_i|)

# Random restarts
DEFAULT_TRIALS = 10
DEFAULT_SEED = 0

# Deflation
DEFLATION_ALPHA = 2.0
DEFLATION_BETA = 1.0
DEFLATION_PERTURB = 1e-3
DEFLATION_STEP = 1.0
DEFLATION_MAX_ITERS = 200  # deflated Newton iterations per round, separate from MAX_NEWTON_ITERS
VALID_JACOBIAN_MODES = ('fd', 'assembled')
DEFLATION_JACOBIAN = 'fd'
assert DEFLATION_JACOBIAN in VALID_JACOBIAN_MODES, f"DEFLATION_JACOBIAN must be one of {VALID_JACOBIAN_MODES}, got {DEFLATION_JACOBIAN!r}"
DUPLICATE_ROOT_TOL = 1e-6
ROOT_PROXIMITY_GUARD = 1e-9

# Ensemble statistics
CLUSTER_TOL = 1e-3  # relative parameter distance
HISTOGRAM_BINS = 30
ENSEMBLE_TOP = 10

# Newton-composite |x| approximations
ABS_MAX_K = 12
ABS_GRID_POINTS = 100

# Evaluation grids for curves and sup-norm errors
CURVE_POINTS = 1001
SUP_GRID_POINTS = 2001

# Conformal map study
CONFORMAL_RUNGE_A = 25.0
CONFORMAL_N_LIST = (5, 10, 15, 20, 25, 30)
INVERSE_MAP_TOL = 1e-14
INVERSE_MAP_MAX_ITERS = 50
POLE_RESIDUAL_TOL = 1e-10

# Bessel evaluation limits
BESSEL_MAX_ORDER = 64
BESSEL_MAX_ARG = 200.0
BESSEL_SERIES_LIMIT = 12.0

# Output
OUTPUT_DIR = 'runs'
PRESETS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'experiments.yaml')
SCHEMA_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'schemas', 'run_record.schema.json')
SCHEMA_VERSION = 1

# Worker threads for independent trials (--threads, then this env var, then 1)
THREADS_ENV_VAR = 'DEEPPOLY_THREADS'
DEFAULT_THREADS = 1

# Logging
LOG_LEVEL = 'INFO'  # DEBUG, INFO, WARNING, ERROR

# --------------------------------------------------------------
# Optional per-host overrides
# --------------------------------------------------------------
# To override settings on one machine (e.g. a larger MAX_BFGS_ITERS for
# large ensembles), create a config_local.py alongside this file.
try:
    from config_local import *  # noqa: F401,F403
except ImportError:
    pass
