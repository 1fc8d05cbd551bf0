# constants.py
"""
Centralized constants for the two-step HMM estimator.
Tolerances, defaults, CSV column names and environment variable names live
here so the numerical core never carries magic numbers.
"""

# --- Model validation ---
ROW_SUM_TOLERANCE = 1e-12
RANK_TOLERANCE = 1e-10  # smallest singular value of B for rank(B) = X
STATIONARY_TOLERANCE = 1e-12

# --- QP solver ---
QP_TOLERANCE = 1e-9
QP_MAX_ITER = 200
QP_PHASE1_TOLERANCE = 1e-7  # total violation above which a QP is infeasible
QP_ACTIVE_TOLERANCE = 1e-7  # slack below which a constraint joins the start working set
QP_STEP_EPS = 1e-12
EIGEN_TOLERANCE = 1e-10

# --- Moment matching ---
RENORMALIZATION_LOG_THRESHOLD = 1e-6

# --- Likelihood ---
FD_GRADIENT_STEP = 1e-6
FD_HESSIAN_STEP = 1e-5
FD_BOUNDARY_FACTOR = 10.0  # h must stay below dist(theta, boundary) / factor

# --- Newton step ---
BOUNDARY_PROJECTION = 1e-8
REGULARIZATION_BASE = 1e-8
REGULARIZATION_MAX_DOUBLINGS = 200
NEGATIVE_DEFINITE_MARGIN = 1e-10

# --- EM ---
EM_TOLERANCE = 1e-6
EM_MAX_ITER = 500
EM_START_SMOOTHING = 1e-8

# --- Method tags ---
METHOD_MM = "MM"
METHOD_TWO_STEP = "2S"
METHOD_EM = "EM"
METHOD_EM_MM = "EM-MM"
METHOD_EM_TRUE = "EM-True"
ALL_METHODS = [METHOD_MM, METHOD_EM, METHOD_EM_MM, METHOD_EM_TRUE, METHOD_TWO_STEP]

# --- Benchmark ---
RANDOM_SYSTEM_RETRIES = 100
DEFAULT_BOUND_FRACTION = 0.1
DEFAULT_BOUND_POLICY = "tenth-of-min-stationary"
DEFAULT_REPLICATES = 100
DEFAULT_MASTER_SEED = 0
DEFAULT_SAMPLE_SIZES = [
    100,
    278,
    774,
    2154,
    5995,
    16681,
    46416,
    129155,
    359381,
    500000,
]

# --- CSV columns (median file mirrors the figure series) ---
N_COLUMN_NAME = "N"
ARM_COLUMNS = {
    METHOD_MM: "mom",
    METHOD_EM: "em",
    METHOD_EM_MM: "em_mom",
    METHOD_EM_TRUE: "em_true",
    METHOD_TWO_STEP: "newton",
}
TIME_SUFFIX = "_time"
MEDIAN_COLUMNS = (
    [N_COLUMN_NAME]
    + list(ARM_COLUMNS.values())
    + [f"{name}{TIME_SUFFIX}" for name in ARM_COLUMNS.values()]
)
RAW_COLUMNS = [
    "replicate",
    "seed",
    N_COLUMN_NAME,
    "arm",
    "rmse",
    "seconds",
    "status",
    "non_nd_hessian",
    "iterations",
    "data_passes",
    "message",
]
STATUS_OK = "ok"
STATUS_FAILED = "failed"
CSV_FLOAT_FORMAT = "%.12e"

# --- Files ---
MEDIAN_FILE_TEMPLATE = "benchmark_X{x}_Y{y}_median.csv"
RAW_FILE_TEMPLATE = "benchmark_X{x}_Y{y}_raw.csv"
COMMENT_CHAR = "#"

# --- Environment ---
LOG_LEVEL_ENV = "HMM_LOG_LEVEL"
SENTRY_DSN_ENV = "SENTRY_DSN"
WORKERS_ENV = "HMM_BENCH_WORKERS"

# --- CLI exit codes ---
EXIT_OK = 0
EXIT_VALIDATION_ERROR = 1
EXIT_NUMERICAL_ERROR = 2
