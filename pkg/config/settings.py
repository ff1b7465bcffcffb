"""Django settings for the Gaussian Flats reconstruction toolkit."""
from pathlib import Path
import os
import sys
from decouple import config as env_config

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = env_config('SECRET_KEY', default='flats-local-key-no-web-surface')
DEBUG = env_config('FLATS_DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = []

INSTALLED_APPS = [
    # Local apps (management commands live in controllers/management/commands)
    'controllers',
]

# No ORM: every artefact is a file on disk
DATABASES = {}
USE_TZ = True

# Representation
SH_DEGREE = env_config('FLATS_SH_DEGREE', default=2, cast=int)
FLATNESS_FLOOR = 1e-4  # normal-direction scale of planar Gaussians (scene units)

# Rasterizer
TILE_SIZE = env_config('FLATS_TILE_SIZE', default=16, cast=int)
RENDER_THREADS = env_config('FLATS_THREADS', default=os.cpu_count() or 1, cast=int)
NEAR_PLANE = 0.01
DILATION = 0.3
TRANSMITTANCE_EPS = 1e-4
ALPHA_EPS = 1e-4
BACKGROUND = env_config(
    'FLATS_BACKGROUND', default='0,0,0',
    cast=lambda v: tuple(float(s.strip()) for s in v.split(',')),
)

# Plane initialization
ALPHA_THRESHOLD = 0.1
DEPTH_SHELL = 0.05
RANSAC_EPSILON = 0.01
RANSAC_ITERS = 256
MIN_INLIERS = 100
MERGE_ANGLE_DEG = 10.0
MERGE_DISTANCE = 0.1

# Training schedule
WARMUP_ITERS = 3500
WARMUP_ITERS_RANDOM_INIT = 5000
TOTAL_ITERS = 30000
PLANE_PHASE_ITERS = 10
GAUSSIAN_PHASE_ITERS = 100
RELOCATION_INTERVAL = 100

# Loss weights
LAMBDA_MASK = 0.1
LAMBDA_TV = 0.1
LAMBDA_SCALE = 0.01
LAMBDA_OPACITY = 0.01
LAMBDA_FLAT = 0.1

# Relocation
SIGMA_PERP = 0.01
SIGMA_PARALLEL = 0.3
DEAD_OPACITY = 0.005
NOISE_LR = 5e5

# Learning rates
LR_MEANS = 1.6e-4
LR_MEANS_FINAL = 1.6e-6
LR_SCALES = 5e-3
LR_ROTATIONS = 5e-3
LR_OPACITY = 5e-2
LR_SH = 2.5e-3
LR_NORMALS = 1e-3

# Meshing
VOXEL_SIZE = 0.02
GRID_CELL = 0.02
MIN_CONTOUR_POINTS = 100

# Evaluation
F1_THRESHOLD = 0.05
MESH_SAMPLES = 10000
TEST_EVERY = 8

# Exit codes
EXIT_OK = 0
EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE = 2

LOG_LEVEL = env_config('FLATS_LOG_LEVEL', default='INFO')
USE_COLOR = sys.stderr.isatty() and 'NO_COLOR' not in os.environ

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
        'color': {
            '()': 'utils.helpers.ColorFormatter',
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'color' if USE_COLOR else 'plain',
        },
    },
    'root': {
        'handlers': ['stderr'],
        'level': LOG_LEVEL,
    },
}
