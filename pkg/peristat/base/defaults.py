import math

# Materials (GPa)
MATRIX_YOUNGS_MODULUS = 71.7
PARTICLE_YOUNGS_MODULUS = 427.0
POISSON_RATIO_2D = 1.0 / 3.0
POISSON_RATIO_3D = 0.25

# Bond critical stretches
PARTICLE_CRITICAL_STRETCH = 0.00338
MATRIX_CRITICAL_STRETCH = 0.01161
INTERFACE_CRITICAL_STRETCH = 0.007495

# RVE (mm)
RVE_SIDE_LENGTH = 1.0
RVE_SPACING = 0.0125
PARTICLE_RADIUS = 0.0522
VOLUME_FRACTION = 0.14
JAMMING_FRACTION = 0.5
MAX_PLACEMENT_ATTEMPTS = 100000

# Peridynamics
HORIZON_FACTOR = 3.0
LENGTH_SCALE_FACTOR = 1.0 / 3.0
HORIZON_TOLERANCE = 1e-10
TIE_TOLERANCE = 0.0
MAX_INNER_ITERATIONS = 200

# Loading
RVE_DISPLACEMENT = 0.02
RVE_STEPS = 100
MACRO_STEPS = 100
BREAK_FRACTION = 0.05
CORRECTION_STRETCH = 1e-3

# Solvers
SOLVER_METHOD = "direct"
SOLVER_TOLERANCE = 1e-10
ENERGY_FLOOR = 1e-12
REPRESENTABILITY_TOLERANCE = 0.05
QUADRATURE_ORDER = 64

# Samples
SAMPLE_COUNT = 25
SEED = 2023

FULL_TURN = 2.0 * math.pi
