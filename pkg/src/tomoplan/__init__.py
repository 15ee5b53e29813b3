"""tomoplan: measurement-time allocation and precision analysis for
quantum state tomography.

Given a fixed set of measurement configurations on an N-dimensional
system, the package computes how to split a measurement budget across the
configurations (state-specific, state-averaged by two routes, fairness
optimizing, and constrained-estimator variants), and validates the
resulting precision claims with seeded Monte-Carlo reconstruction
campaigns.
"""

__version__ = "0.1.0"

from .bloch import (
    BlochState,
    ExperimentSetup,
    HermitianBasis,
    MeasurementConfig,
    PovmOutcome,
    ValidationReport,
    bloch_to_density,
    config_from_affine,
    config_from_matrices,
    density_to_bloch,
    generate_basis,
    max_bloch_radius,
    outcome_from_affine,
    povm_to_affine,
    probabilities,
    validate_setup,
)
from .design import Design, discrepancy, round_design
from .fisher import FisherBundle, MinimalKernel, crb_minimal, fisher_info, \
    minimal_kernel
from .design_numeric import DesignResult, OptimizerSettings, cost_gradient, \
    cost_hessian, optimize_design, statistical_problem, averaged_problem
from .design_analytic import minimal_oed, minimal_oed_binary
from .averaging import AveragingContext, SphereMoments, average_oed_crb, \
    average_oed_fisher, averaged_fisher, averaging_context, g_coefficients, \
    sphere_moments, state_space_radius
from .odt import OdtResult, VarianceMatrix, crb_variance, odt_design, \
    variance_matrix
from .estimators import DataRecord, Estimate, invert, least_squares, \
    log_likelihood, max_likelihood, sample_data
from .montecarlo import BruteForceResult, CampaignResult, SphereGrid, \
    brute_force_average_oed, run_trials, sphere_grid
from .cholesky import CcrbResult, CholeskyState, QuadraticForms, ccrb, \
    cholesky_vector, constrained_crb, fisher_cholesky, \
    optimize_design_cholesky, quadratic_forms, theta_to_density
from .errors import (
    ConvergenceError,
    DegenerateDesignError,
    DivergentAverageError,
    MinimalityError,
    SingularityError,
    TomographyError,
    ValidationError,
)
