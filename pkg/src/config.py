import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

# Paths
BASE_DIR = Path(__file__).parent.parent
DATA_DIR = BASE_DIR / "data"
WITNESS_DIR = Path(os.getenv("ORLICZ_WITNESS_DIR", DATA_DIR / "witnesses"))

# Run defaults
DEFAULT_SEED = int(os.getenv("ORLICZ_SEED", "0"))
DEFAULT_THREADS = int(os.getenv("ORLICZ_THREADS", "1"))
LOG_LEVEL = os.getenv("ORLICZ_LOG_LEVEL", "WARNING")

# Report schema
SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

# Law comparison
LAW_TOL = 1e-12

# QuantileRV quadrature
DEFAULT_GRIDPOINTS = int(os.getenv("ORLICZ_GRIDPOINTS", "8192"))
DEFAULT_TAIL_SPLIT = float(os.getenv("ORLICZ_TAIL_SPLIT", "0.9"))
PANELS_PER_OCTAVE = 1024
TAIL_OCTAVES = 48
OCTAVES_PER_LEVEL = 16
MAX_REFINEMENTS = 3
FAR_TAIL_OCTAVES = 1000
EXPECTATION_RTOL = 1e-8
DIVERGENCE_FACTOR = 2.0

# Orlicz functions
PHI_CAP = 1e300
OVERFLOW_GUARD = 1e150
CONJUGATE_TOL = 1e-10
LUXEMBURG_RTOL = 1e-10
HEART_RTOL = 1e-6
DELTA2_T0 = 1.0
DELTA2_OCTAVES = 40
DELTA2_RTOL = 1e-3
SANDWICH_SLACK = 1e-6

# Partitions and duality
MAX_REARRANGEMENTS = 1_000_000
MIN_EXTENSION_ATOMS_LOG2 = 12
STALL_STEP = 1e-8
DIVERGENCE_BOUND = 1e8
EXTENSION_RTOL = 1e-3
EXTENSION_ATOL = 1e-6

# Probes
AXIOM_TOL = 1e-9
FATOU_TOL = 1e-8
DILATATION_TOL = 1e-10
COUNTEREXAMPLE_LAMBDAS = [2.0 ** k for k in range(-3, 4)]
COUNTEREXAMPLE_EXTRA_SHIFTS = [1.0, 10.0]

# Command registry
COMMANDS = [
    "norm",
    "conjugate",
    "var",
    "es",
    "kusuoka",
    "condexp",
    "dual",
    "extend",
    "counterexample",
    "probe",
]

PROBES = [
    "axioms",
    "fatou",
    "dilatation",
    "coex",
    "blowup",
    "lsc",
    "heart",
    "delta2",
    "extension-gap",
]
