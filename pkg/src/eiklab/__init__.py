"""Numerical laboratory for anisotropic eikonal equations with rough coefficients.

Solves H(x, -Du) = 1 with Dirichlet data via the minimum-time representation,
traces extremal trajectories, and measures the structural constants and
regularity exponents of the model empirically.
"""
from .audit import AuditReport, Violation, audit_standing_assumptions
from .duality import (LemmaResidual, ModelDefectError, SuiteConstants,
                      bipolar_residuals, check_curvature_pinching,
                      check_direction_sandwich, check_f_holder,
                      check_gradient_duality, check_polar_growth_and_holder,
                      check_support_identity, estimate_polar_grad_lipschitz,
                      polar_eval_numeric, polar_grad_numeric, run_lemma_suite,
                      strict_convexity_residuals, suite_constants)
from .fitting import ExponentFit, FitError, envelope_fit
from .geometry import Box, SpherePartition, make_sphere_partition
from .hamiltonians import (DEFAULT_NUMERIC_PARAMS, EvaluationError,
                           HamiltonianModel, MatrixFieldSpec,
                           ModelValidationError, NumericParams, PowerBump,
                           StandingConstants, TrigSum, make_generic_model,
                           make_matrix_field_model, make_power_bump_field,
                           model_from_json, model_to_json)
from .probe import SecondDifferenceProfile, SemiconcavityFit, \
    fit_semiconcavity_exponent, second_difference_profile
from .solver import (Annulus, Ball, BoxShape, ConfigurationError, DomainMask,
                     GridSpec, ImplicitShape, ValueField, build_domain,
                     extract_level_set, interp_values, solve_min_time)
from .trajectories import (Trajectory, chord_metric_defect_fit,
                           midpoint_defect_fit, trace_optimal,
                           velocity_holder_fit)

__version__ = "0.1.0"

__all__ = [
    "AuditReport", "Violation", "audit_standing_assumptions",
    "LemmaResidual", "ModelDefectError", "SuiteConstants",
    "bipolar_residuals", "check_curvature_pinching",
    "check_direction_sandwich", "check_f_holder", "check_gradient_duality",
    "check_polar_growth_and_holder", "check_support_identity",
    "estimate_polar_grad_lipschitz", "polar_eval_numeric",
    "polar_grad_numeric", "run_lemma_suite", "strict_convexity_residuals",
    "suite_constants",
    "ExponentFit", "FitError", "envelope_fit",
    "Box", "SpherePartition", "make_sphere_partition",
    "DEFAULT_NUMERIC_PARAMS", "EvaluationError", "HamiltonianModel",
    "MatrixFieldSpec", "ModelValidationError", "NumericParams", "PowerBump",
    "StandingConstants", "TrigSum", "make_generic_model",
    "make_matrix_field_model", "make_power_bump_field", "model_from_json",
    "model_to_json",
    "SecondDifferenceProfile", "SemiconcavityFit", "fit_semiconcavity_exponent",
    "second_difference_profile",
    "Annulus", "Ball", "BoxShape", "ConfigurationError", "DomainMask",
    "GridSpec", "ImplicitShape", "ValueField", "build_domain",
    "extract_level_set", "interp_values", "solve_min_time",
    "Trajectory", "chord_metric_defect_fit", "midpoint_defect_fit",
    "trace_optimal", "velocity_holder_fit",
    "__version__",
]
