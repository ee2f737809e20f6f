"""Study constants and configuration values."""

# Study design defaults
DEFAULT_N_DAYS = 30
DEFAULT_SLOTS_PER_DAY = 6
DEFAULT_START_POINT = 6
DEFAULT_TARGET_TRIGGERS = 4
DEFAULT_TRIGGER_CAP = 10
DEFAULT_STATIC_LO = 0.15
DEFAULT_STATIC_HI = 0.85
DEFAULT_RANDOM_TRIGGER_COUNT = 10

# Simulation defaults
DEFAULT_ADHERENCE_RATE = 0.19
DEFAULT_PARAM_LO = 0.5
DEFAULT_PARAM_HI = 10.0
DEFAULT_SUBJECTS = 1000
DEFAULT_SEED = 7

# Beta fitting
DUMMY_OBSERVATIONS = (0.4, 0.6)
MIN_FIT_SAMPLES = 2
QUANTILE_TOLERANCE = 1e-10

# Rank-sum test
EXACT_TEST_MAX_TOTAL = 20

# Design grid
DEFAULT_GRID_START_POINTS = 180
DEFAULT_GRID_ALPHA_POINTS = 101

# Ingestion
DEFAULT_MIN_INTERACTIONS = 6
DEFAULT_TIMEZONE = "UTC"
COLUMN_USER_ID = "user_id"
COLUMN_SAVE = "save"
COLUMN_SAVE_DATE = "save_date"
COLUMN_SEVERITY = "question_2"
TIMESTAMP_MERGE = "merge"
TIMESTAMP_SAVE_DATE = "save_date"
TIMESTAMP_SAVE = "save"
TIMESTAMP_MODES = (TIMESTAMP_MERGE, TIMESTAMP_SAVE_DATE, TIMESTAMP_SAVE)

# Canonical file formats
MISSING_TOKEN = "NA"
SERIES_COLUMNS = ("subject_id", "slot", "value")
TRIGGER_LOG_COLUMNS = ("subject_id", "slot", "triggered", "alpha", "lower", "upper")

# Policies
POLICY_RANDOM = "random"
POLICY_STATIC = "static"
POLICY_ALG1 = "alg1"
POLICY_ALG2 = "alg2"
ALL_POLICIES = (POLICY_RANDOM, POLICY_STATIC, POLICY_ALG1, POLICY_ALG2)

# One-sided comparisons, read as "first > second"
COMPARISON_PAIRS = (
    (POLICY_STATIC, POLICY_RANDOM),
    (POLICY_ALG1, POLICY_RANDOM),
    (POLICY_ALG1, POLICY_STATIC),
    (POLICY_ALG2, POLICY_RANDOM),
    (POLICY_ALG2, POLICY_STATIC),
    (POLICY_ALG2, POLICY_ALG1),
)

# Metrics
METRIC_F1 = "f1"
METRIC_U1 = "u1"
ALL_METRICS = (METRIC_F1, METRIC_U1)
UTILITY_SIGN_NEGATED = "negated"
UTILITY_SIGN_RAW = "raw"

# Trigger sides
SIDE_HIGH = "high"
SIDE_LOW = "low"

# Exit codes
EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE_ERROR = 2
