"""Application constants and numerical defaults"""

# Polynomial validation
CRITICAL_POINT_TOL = 1e-10
SECOND_DERIVATIVE_TOL = 1e-8
ROOT_TOL = 1e-12
PREIMAGE_SLACK = 1e-9
CONTRACTION_MARGIN = 10.0

# Inverse spectral reconstruction
NODE_GAP = 1e-10
WEIGHT_SUM_TOL = 1e-10
MEASURE_SUM_TOL = 1e-12
DIVISION_REMAINDER_TOL = 1e-9
MAX_BLOCK_DEGREE = 64

# Renormalization
DEFAULT_CF_DEPTH = 32
MIN_CF_DEPTH = 8
DEFAULT_TOLERANCE = 1e-10
NEAR_SPECTRUM_RATIO = 1e-3
NEAR_SPECTRUM_DISTANCE = 1e-8
DIAGONAL_CONVENTIONS = ("resolvent", "literal")
DEFAULT_DIAGONAL = "resolvent"
SEED_BOUND_SLACK = 1e-9

# Diagnostics
BAND_DILATION = 1e-6
OUTLIER_ALLOWANCE = 4
PROBE_NOISE = 0.1
DEFAULT_PROBE_TRIALS = 20

# Verification tolerances
IDENTITY_TOL = 1e-6
FORMS_TOL = 1e-6
TRANSLATION_TOL = 1e-7
ROUNDTRIP_TOL = 1e-12
CHAIN_RULE_TOL = 1e-7
WRONSKIAN_TOL = 1e-8
BLOCK_IDENTITY_TOL = 1e-9
VERIFY_CHECKS = ("identity", "forms", "wronskian", "block_identities", "chain", "translation", "roundtrip")
DEFAULT_VERIFY_BLOCKS = 64
DEFAULT_Z_MULTIPLIERS = (-3.0, -2.0, 2.0, 2.5, 3.0)
DEFAULT_CHAIN_WINDOW = (0, 31)
DEFAULT_TRANSLATION_SHIFTS = (1, 2, 3)
DEFAULT_BAND_SECTION = 200
DEFAULT_METRIC_LMAX = 4

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4

# Output files
DEFAULT_OUT_DIR = "results"
COEFFICIENTS_FILE = "coefficients.csv"
REPORT_FILE = "report.json"
VERIFY_FILE = "verify.json"
BANDS_FILE = "bands.json"
METRIC_FILE = "metric.csv"
PROBE_FILE = "probe.json"
FLOAT_FORMAT = ".17g"

# Environment
THREADS_ENV = "RENORM_THREADS"
DEFAULT_THREADS = 1

# Logging Configuration
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_LOG_FILE = ""
LOGS_DIR = "logs"
