"""Default numerical tolerances used across the package.

Every function that uses one of these accepts an explicit override; the CLI
exposes the user-facing ones as config keys.
"""

# linalg
HERMITIAN_TOL = 1e-12          # max |A - A^H| (scaled by max(1, max|A|))
JACOBI_OFFDIAG_RTOL = 1e-14    # stop when ||offdiag||_F < rtol * ||A||_F
DEGENERACY_GAP = 1e-9          # eigenvalue clusters closer than this are re-orthonormalized
ROTATION_TOL = 1e-10           # orthogonality / det checks on 3x3 rotations
MAX_DIM = 16

# states
NORM_TOL = 1e-12
DENSITY_TOL = 1e-10            # hermiticity and unit trace of density matrices
PSD_REPAIR_FLOOR = -1e-9       # eigenvalues in [floor, 0) are clamped to zero
SUPPORT_RTOL = 1e-13           # eigenvalues below rtol * trace are dropped when factoring rho

# dynamics
INTEGRATOR_TOL = 1e-9

# metrology
SUPPORT_THRESHOLD = 1e-12      # lambda_a + lambda_b must exceed this * Tr(rho)
SLD_ZERO_EIG = 1e-9            # SLD eigenvalues below this are "zero"
KINK_TOLERANCE = 1e-6          # concurrence floor below which CoE is undefined
STENCIL_AGREEMENT = 1e-3       # 3pt vs 5pt relative disagreement that flags a kink
PRODUCT_STATE_TOL = 1e-6       # concurrence below this counts as a product vector
COINCIDENCE_RATIO_TOL = 1e-3   # |CoE/F - 1|
COINCIDENCE_CSLD_TOL = 1e-3

# experiments
SCAN_TOLERANCE = 1e-6          # violation if F - CoE < -tol * max(1, F)
ROOT_RESIDUAL = 1e-10
