"""Sparse nonlinear regression with certified l1 tuning constants.

Estimates sparse beta in models y = f(X'beta) + eps by l1-regularized
maximum likelihood (exponential-family links) or least squares (analytic
links) over constrained search domains, computes the explicit tuning
constant c_r and the high-probability error radius kappa_r * sqrt(s/n)
from design coherence and link curvature, and verifies both empirically
with a Monte Carlo harness.
"""

from .certificates import (
    AnalyticC1Params,
    BoundCertificate,
    NoiseSpec,
    c1_analytic_bounded,
    c1_analytic_general,
    c1_exp_family,
    c2_from_coherence,
    c3_curvature,
    certify_basic,
    certify_coherence,
    max_feasible_tau,
    select_tau,
    tail_check,
)
from .corrupted import CorruptionSpec, SmoothedLink, composed_tail, induce_problem, smooth_link
from .design import (
    CoherenceStats,
    DesignMatrix,
    DomainSpec,
    coherence_stats,
    column_norm_2k,
    domain_contains,
    domain_radius_upper,
    weighted_l1_norm,
)
from .estimators import (
    EstimationProblem,
    FitOptions,
    FitResult,
    check_basic_inequality,
    fit,
    make_inequality_context,
    objective,
    optimality_residual,
    project_weighted_l1,
)
from .harness import (
    ExperimentConfig,
    brute_force_fit,
    build_certificate,
    generate_design,
    generate_noise,
    generate_truth,
    run_coverage,
    run_scaling,
)
from .links import (
    AnalyticLink,
    ExpFamilyLink,
    dk_bounds,
    eval_cumulant,
    exp_link,
    gaussian_link,
    identity_link,
    inf_lambda2,
    link_from_spec,
    logistic_analytic_link,
    logistic_link,
    poisson_link,
    poly_link,
    slope_lower_bound,
)
from .regressor import SparseLinkRegressor

__version__ = "0.1.0"
