"""Covariance-spectrum screening: effective-rank error envelopes for the sample
covariance matrix, data-driven scree-plot thresholds, and their extension to
discretely observed functional data, with a Monte Carlo verification harness.
"""

from .linalg import (
    DegenerateMatrixError,
    EigenConvergenceError,
    SpectralDecomposition,
    SymmetricMatrix,
    align_sign,
    effective_rank,
    eigh,
    frobenius_norm,
    operator_norm,
    trace,
)
from .models import (
    AssumptionViolationError,
    FactorParams,
    PolyDecayParams,
    PopulationModel,
    SampleMatrix,
    build_explicit,
    build_factor,
    build_poly_decay,
    identity_model,
    sample_gaussian,
    sample_subgaussian_rotated,
)
from .estimate import (
    ConstantsConfig,
    Regime,
    SampleTooSmallError,
    class_membership,
    effrank_relative_error,
    epsilon1,
    eta_empirical,
    eta_theoretical,
    sample_covariance,
    trace_relative_error,
)
from .screen import (
    JumpDecision,
    SelectionResult,
    certify_eigenvectors,
    detect_minimal_jump,
    detect_poly_jump,
    eigenvector_error_bound,
    scree_count,
    select_combined_poly,
    select_eigenvalues,
)
from .fpca import (
    CovarianceOperator,
    DesignGrid,
    FunctionalSample,
    OperatorConstants,
    approximation_report,
    brownian_bridge,
    brownian_motion,
    detect_operator_jump,
    discretize,
    phi_vector,
    planted_jump_operator,
    scaled_sample_covariance,
    select_operator_eigen,
    simulate_trajectories,
    uniform_grid,
)

__version__ = "0.1.0"
