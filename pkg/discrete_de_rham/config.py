"""
Library constants and numerical tolerances.

Every threshold used by the local solves, the rank computations and the
property suites lives here so that reports can embed the exact values
they were checked against (see ``tolerances()``).

The ``config_dir()`` helper returns the platform-appropriate config
directory; ``run_config`` reads an optional default ``run.json`` from it.
"""

import os
import sys
from pathlib import Path

# =============================================================================
# APP IDENTITY & CONFIG DIRECTORY
# =============================================================================
APP_NAME = "discrete-de-rham"


def config_dir() -> Path:
    """Return the platform-appropriate config directory, creating it if needed."""
    if sys.platform == "win32":
        base = Path(os.environ.get("APPDATA", Path.home() / "AppData" / "Roaming"))
    elif sys.platform == "darwin":
        base = Path.home() / "Library" / "Application Support"
    else:
        base = Path(os.environ.get("XDG_CONFIG_HOME", Path.home() / ".config"))
    directory = base / APP_NAME
    directory.mkdir(parents=True, exist_ok=True)
    return directory

# =============================================================================
# ALGEBRA & GEOMETRY TOLERANCES
# =============================================================================
ORTHONORMAL_TOL = 1e-12        # Absolute deviation allowed on frame Gram entries
AFFINE_HULL_TOL = 1e-9         # Relative distance of a subcell vertex to the cell hull
CHUNK_VOLUME_TOL = 1e-14       # Simplicial chunk volume floor, relative to h_f^d
MAX_AMBIENT_DIM = 3            # Geometry, generators and I/O stop at n = 3

# =============================================================================
# LOCAL SPACES & CONDITIONING
# =============================================================================
RANK_CUTOFF = 1e-10            # Relative singular value cutoff for orthonormalization
COND_WARN = 1e8                # Local solve condition number that triggers a warning
COND_ERROR = 1e12              # Local solve condition number that aborts

# Supported polynomial degrees
R_MIN = 0
R_MAX = 5

# =============================================================================
# QUADRATURE
# =============================================================================
QUADRATURE_MAX_DEGREE = 21     # Hard cap on simplex rule exactness
QUADRATURE_SELF_TEST_TOL = 1e-13
CHECK_QUAD_DEGREE = 14         # Rule used by the smooth-field suites (commutation, stabilization decay)


def field_quadrature_degree(r: int) -> int:
    """Default exactness degree for integrals involving smooth user fields."""
    return min(2 * r + 4, QUADRATURE_MAX_DEGREE)

# =============================================================================
# COHOMOLOGY
# =============================================================================
RANK_REL_TOL = 1e-8            # Singular values below tol * sigma_max count as zero
RANK_GAP_FACTOR = 10.0         # Closer than this factor to the cutoff: ambiguous rank
RANK_GAP_TARGET = 1e3          # Gap expected on all shipped meshes

# =============================================================================
# CHECK THRESHOLDS
# =============================================================================
TOL_EXACT = 1e-10              # Algebraic identities (consistency, complex, cochain)
TOL_RED_EXT = 1e-12            # Reduction after extension
TOL_FLAT = 1e-9                # Flat preimage round trip
TOL_QUADRATURE = 1e-8          # Identities limited by quadrature of smooth fields
TOL_SOLVE = 1e-10              # Relative residual of the Hodge saddle solve
TOL_SOLVE_FAIL = 1e-8          # Relative residual at which a Hodge solve is rejected
STAB_ROUNDOFF = 1e-12          # Stabilization forms below this fraction of |ω|ᵀ|S||ω| are roundoff
INFSUP_COLLAPSE = 1e-3         # Inf-sup constant below this fraction of the coarsest value: collapse
SLOPE_MARGIN = 0.25            # Observed slope must lie within r+1 -/+ this margin

# =============================================================================
# RUN DEFAULTS
# =============================================================================
DEFAULT_GENERATOR = "hexahedron"
DEFAULT_R = 1
DEFAULT_SEED = 20240229
DEFAULT_REFINEMENTS = 3
DEFAULT_OUT_DIR = "ddr-output"
DEFAULT_STOKES_PAIRS = 20      # Random polynomial pairs per cell in the Stokes suite
DEFAULT_CELLS_PER_DIM = 4      # Cells sampled per dimension by the per-cell suites (0 = all)
LEDGER_R_MAX = 4
COMPLEX_CHOICES = ("ddr", "vem", "both")
STABILIZATION_CHOICES = ("trace", "interpolate")
SOURCE_CHOICES = ("interpolate", "weak")


def tolerances() -> dict:
    """Return the check thresholds as a plain dict for embedding in reports."""
    return {
        "exact": TOL_EXACT,
        "reduction_extension": TOL_RED_EXT,
        "flat_preimage": TOL_FLAT,
        "quadrature": TOL_QUADRATURE,
        "solve": TOL_SOLVE,
        "solve_fail": TOL_SOLVE_FAIL,
        "rank_rel": RANK_REL_TOL,
        "rank_gap_factor": RANK_GAP_FACTOR,
        "slope_margin": SLOPE_MARGIN,
    }
