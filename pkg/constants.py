"""
Global constants for the fsadapt toolkit.

Adaptation defaults, numeric tolerances, file format identifiers and CLI
exit codes used throughout the framework and components.
"""

# ============================================================================
# Adaptation Defaults
# ============================================================================

DEFAULT_EPOCHS = 20
DEFAULT_BATCH_SIZE = 4
DEFAULT_LEARNING_RATE = 1e-4
DEFAULT_WEIGHT_DECAY = 0.05  # recorded in every snapshot
DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_ADAM_EPS = 1e-8
DEFAULT_FROZEN_STAGES = 2

# Alignment head
DEFAULT_TAU = 10.0
DEFAULT_M0 = 4
DEFAULT_AGGREGATE = "sum"
DEFAULT_TEMPLATE = "The symptom of [CLASS] in chest x-ray image is [MASK]."
MASK_TOKEN = "[MASK]"
CLASS_TOKEN = "[CLASS]"
MASK_FALLBACK_SENTENCE = "This image shows [MASK]."

# Augmentation
DEFAULT_HFLIP_PROB = 0.5
DEFAULT_CROP_PADDING = 2

# ============================================================================
# Numeric Tolerances
# ============================================================================

LAYER_NORM_EPS = 1e-5
BCE_CLAMP_EPS = 1e-7
GRADCHECK_EPS = 1e-5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_ABS_FLOOR = 1e-4  # denominator floor for relative error of tiny gradients
GRADCHECK_COORDS_PER_TENSOR = 8

# Toy embedder
TOY_EMBED_WINDOW = 6
TOY_EMBED_NGRAM = 3
TOY_EMBED_BUCKETS = 2048

# ============================================================================
# File Formats
# ============================================================================

TASK_FORMAT_VERSION = "fsadapt-task/1"
CHECKPOINT_FORMAT_VERSION = "fsadapt-checkpoint/1"
CONTAINER_HEADER_BYTES = 8  # little-endian uint64 manifest length
FLOAT_REPR_DIGITS = 17

SWEEP_CSV_HEADER = "N,frozen_params,trainable_params,mAUC,wall_time_s"
LINEAR_HEAD_LABEL = "linear"

# Output file names written by the train/eval commands
CONFIG_SNAPSHOT_FILE = "config.json"
CHECKPOINT_FILE = "model.ckpt"
HISTORY_FILE = "history.json"
REPORT_FILE = "report.json"
REPORT_TEXT_FILE = "report.txt"
METADATA_FILE = "metadata.json"

# ============================================================================
# Framework Constants
# ============================================================================

COMPONENT_CONFIG_FILE = "config.yml"

# Logging
LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Exit codes
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

# ============================================================================
# Helper Functions
# ============================================================================


def format_float(value: float) -> str:
    """
    Format a float with enough digits for an exact round trip.

    Args:
        value: Finite float to format

    Returns:
        The '%.17g' rendering, always parseable as a JSON number
    """
    value = float(value)
    if value == 0.0:
        value = 0.0  # no "-0" in files
    return format(value, f".{FLOAT_REPR_DIGITS}g")


def format_table_float(value: float, digits: int = 4) -> str:
    """Format a float for human-readable tables."""
    return f"{value:.{digits}f}"
