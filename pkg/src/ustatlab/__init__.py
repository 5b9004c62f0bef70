"""Studentized U-statistics, skewness-aware tail approximations, and
large-scale multiple testing with normal, bootstrap, and regularized
bootstrap calibration.

The package is organized bottom-up: kernels (symmetric kernel
definitions and their projections), ustat (enumeration and fast-path
Studentized statistics), tstat (the two-sample t and the corrected
normal tail), calibration (p-values three ways), multiple_testing
(Benjamini-Hochberg and accounting), simharness (seeded Monte Carlo
experiments), cli (the ustatlab command).
"""

__version__ = "0.1.0"

from .errors import (UStatError, DegenerateSampleError,
                     ExcessiveDegeneracyError, UnsupportedKernelError,
                     NoValidConstantError, WorkBudgetError)
from .kernels import (KernelSpec, OneSampleKernelSpec, ConditionReport,
                      builtin_two_sample, builtin_one_sample, resolve_kappa,
                      project_h1_mc, condition_grid, check_kernel_condition,
                      null_variance_quadrature)
from .ustat import (TwoSampleData, StudentizedResult, u_two_sample,
                    jackknife_two_sample, mann_whitney_fast, u_one_sample,
                    studentize_one_sample)
from .tstat import (MomentSummary, TailApprox, two_sample_t, corrected_tail,
                    moment_summary, normal_upper_tail, abs_central_moment)
from .calibration import (PValueSet, BootstrapNull, TruncationPlan,
                          normal_pvalues, bootstrap_null_t, bootstrap_null_mw,
                          bootstrap_pvalues, make_truncation_plan,
                          regularized_null_t, regularized_bootstrap_pvalues,
                          choose_truncation_constant, ks_to_uniform)
from .multiple_testing import (BHOutcome, FdrReport, SkewnessDiagnostic,
                               bh_procedure, fdr_accounting,
                               skewness_diagnostic)
from .simharness import (DistSpec, ExperimentConfig, CurvePoint,
                         TailRatioCurve, generate_sim1, generate_sim2,
                         run_fdr_experiment, run_tail_ratio_experiment)

__all__ = [
    "__version__",
    "UStatError", "DegenerateSampleError", "ExcessiveDegeneracyError",
    "UnsupportedKernelError", "NoValidConstantError", "WorkBudgetError",
    "KernelSpec", "OneSampleKernelSpec", "ConditionReport",
    "builtin_two_sample", "builtin_one_sample", "resolve_kappa",
    "project_h1_mc", "condition_grid", "check_kernel_condition",
    "null_variance_quadrature",
    "TwoSampleData", "StudentizedResult", "u_two_sample",
    "jackknife_two_sample", "mann_whitney_fast", "u_one_sample",
    "studentize_one_sample",
    "MomentSummary", "TailApprox", "two_sample_t", "corrected_tail",
    "moment_summary", "normal_upper_tail", "abs_central_moment",
    "PValueSet", "BootstrapNull", "TruncationPlan", "normal_pvalues",
    "bootstrap_null_t", "bootstrap_null_mw", "bootstrap_pvalues",
    "make_truncation_plan", "regularized_null_t",
    "regularized_bootstrap_pvalues", "choose_truncation_constant",
    "ks_to_uniform",
    "BHOutcome", "FdrReport", "SkewnessDiagnostic", "bh_procedure",
    "fdr_accounting", "skewness_diagnostic",
    "DistSpec", "ExperimentConfig", "CurvePoint", "TailRatioCurve",
    "generate_sim1", "generate_sim2", "run_fdr_experiment",
    "run_tail_ratio_experiment",
]
