"""
RMT Lab Constants

Centralized location for tolerances, caps and experiment defaults.
Every numerical threshold used by more than one module lives here so that
tests and the harness agree on the same values.
"""

from typing import Final

# ============================================================================
# Ensembles
# ============================================================================
MAX_MOMENT_ORDER: Final[int] = 4
PROBABILITY_SUM_TOL: Final[float] = 1e-12
MOMENT_TOL: Final[float] = 1e-12
REJECTION_MAX_ROUNDS: Final[int] = 1_000_000
TRUNCATION_EXPONENT: Final[float] = 10.0  # K = n ** (10 / C0)

# Words of Philox output consumed per matrix entry, by entry kind.
WORDS_REAL: Final[int] = 1
WORDS_COMPLEX: Final[int] = 2

# ============================================================================
# Spectra
# ============================================================================
JACOBI_TOL: Final[float] = 1e-12
JACOBI_SWEEPS_PER_ROW: Final[int] = 100
SEPARATION_TOL: Final[float] = 1e-8
IDENTITY_TOL: Final[float] = 1e-8
RESOLVENT_DISTANCE_TOL: Final[float] = 1e-6
INTERLACING_TOL: Final[float] = 1e-9
WEYL_TOL: Final[float] = 1e-9

# ============================================================================
# Marchenko-Pastur law
# ============================================================================
CDF_ABS_TOL: Final[float] = 1e-12
QUANTILE_XTOL: Final[float] = 1e-12
FUNCTIONAL_DENOMINATOR_TOL: Final[float] = 1e-12
PV_EXCISION_START: Final[float] = 1e-2
PV_QUAD_LIMIT: Final[int] = 200

# ============================================================================
# Statistics
# ============================================================================
DEFAULT_BINS: Final[int] = 40
DEFAULT_INTERVAL_LEN: Final[float] = 0.2
CSV_FLOAT_FORMAT: Final[str] = "%.12g"
PROJECTION_T_MULTIPLES: Final[tuple[int, ...]] = tuple(range(1, 11))

# ============================================================================
# Harness
# ============================================================================
CONFIG_SCHEMA_VERSION: Final[int] = 1
JSON_FLOAT_FORMAT: Final[str] = ".17g"
CONFIG_HASH_LENGTH: Final[int] = 16
DEFAULT_MAX_FAILURE_RATE: Final[float] = 0.001
DEFAULT_FOURMOMENT_PASS_SIGMA: Final[float] = 3.0
DEFAULT_DELOC_FACTOR: Final[float] = 10.0
DEFAULT_CONCENTRATION_THRESHOLD: Final[float] = 0.5
DEFAULT_GAP_EXPONENTS: Final[tuple[float, ...]] = (0.5, 1.0)
DEFAULT_CONVERGENCE_SIZES: Final[tuple[int, ...]] = (50, 100, 200, 400)

RECORDS_FILENAME: Final[str] = "records.jsonl"
SUMMARY_FILENAME: Final[str] = "summary.json"
CONFIG_FILENAME: Final[str] = "config.json"
PDF_FILENAME: Final[str] = "pdf.csv"
CDF_FILENAME: Final[str] = "cdf.csv"
TABLE_FILENAME: Final[str] = "table.csv"

# ============================================================================
# Canonical configurations
# ============================================================================
FIGURE1_N: Final[int] = 800
FIGURE1_P: Final[int] = 600
FIGURE1_TRIALS: Final[int] = 1000
FIGURE1_ENSEMBLES: Final[tuple[str, str]] = ("gaussian_real", "rademacher")

# ============================================================================
# Exit codes
# ============================================================================
EXIT_OK: Final[int] = 0
EXIT_USAGE: Final[int] = 1
EXIT_NUMERICAL: Final[int] = 2
EXIT_IO: Final[int] = 3
