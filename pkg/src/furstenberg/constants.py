"""Numerical thresholds and Monte-Carlo slacks, kept in one place."""

import math

# sl2
NEAR_ROTATION_TOL = 1e-9
DET_RENORM_TOL = 1e-13
LOG_DOMAIN_RADIUS = 0.5

# circle measures
DEFAULT_GRID = 2**14
KERNEL_SIGMAS = 8.0
MAX_ORDER = 12
EXACT_ATOM_LIMIT = 4096
DETAIL_CONST = math.sqrt(math.pi * math.e / 2.0)
WASSERSTEIN_GAP_CONST = math.sqrt(2.0 / math.pi)

# walks
RENORM_EVERY = 32
DEFAULT_BURN_IN = 2000
STOPPING_CAP = 10**7
NEAR_ROTATION_RETRIES = 10
# per-step rates below this are rounding noise
CHI_ZERO_TOL = 1e-12

# exact arithmetic
ENUMERATION_LIMIT = 10**7

# Monte-Carlo slacks (standard errors)
SLACK_TIGHT = 3.0
SLACK_WIDE = 4.0
SLACK_VOLUME = 5.0

# analysis checks
VARTADD_MIN_SLOPE = 2.5
ENTROPY_VARIANCE_TOL = 0.05
TRUNC_GAUSS_GAP_CONST = 2.0
HAAR_RATIO_SPREAD = 4.0

SCHEMA_VERSION = "1.0"
