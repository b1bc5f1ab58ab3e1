import os
from dotenv import load_dotenv

# Cargar variables de entorno
load_dotenv()

# Runtime configuration
GMOL_THREADS = max(1, int(os.getenv("GMOL_THREADS", "1")))
LOG_LEVEL = os.getenv("GMOL_LOG_LEVEL", "WARNING").upper()
OUTPUT_DIR = os.getenv("GMOL_OUTPUT_DIR", "outputs")
LOCK_FILENAME = ".gmol.lock"

# Line solver defaults
INNER_TOL = 1e-12
OUTER_TOL = 1e-10
MAX_INNER = 200
MAX_SWEEPS = 10000
DIVERGENCE_PATIENCE = 5  # consecutive growing changes before giving up on a line
CHORD_REFRESH_RATIO = 0.5  # refactor the line Jacobian above this observed ratio
DEFAULT_EPSILON = 1e-3

# Ansatz fit defaults
FIT_TARGET_J = 1e-6
FIT_MAX_ITERATIONS = 200
LM_INITIAL_DAMPING = 1e-3
LM_DAMPING_FACTOR = 10.0
LM_MAX_DAMPING = 1e12
LM_JACOBIAN_STEP = 1e-7
P0_SMOOTHING = 1e-8
SEED_EPSILON = 1e-3
SEED_MAX_SWEEPS = 2000
SEED_OUTER_TOL = 1e-8

# Geometry
RADIUS_CHECK_OVERSAMPLING = 8

# Potential certification
POISSON_TOL = 1e-12
THEOREM_NODES = 128
THEOREM_REFINEMENT_NODES = [65, 129]
GRADIENT_DEFECT_FACTOR = 100.0

# Output
CSV_FLOAT_FORMAT = "%.17g"
FIGURE_LINES = [1, 5, 10, 15, 19]

# Boundary presets
BOUNDARY_PRESETS = ["example1", "example2", "couette", "zero"]

# Closure modes
SOLVER_MODES = ["pressure_poisson", "artificial_compressibility"]
