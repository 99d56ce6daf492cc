"""Designed sampling of controlled-trial cohorts from covariate databases.

Stage 1 picks the 2n rows maximizing the determinant of their covariate
covariance; stage 2 splits them into control and treatment groups with
matching first and second moments.
"""
from .allocation import AllocatorConfig, allocate
from .dataset import CovariateTable, SynthSpec, load_csv, standardize, synthesize
from .design import (
    Allocation,
    MseReport,
    cov_alpha_beta,
    d_criterion,
    fisher_information,
    parameter_mses,
)
from .evaluation import ComparisonReport, compare, random_baseline
from .selection import Selection, SelectorConfig, select_sample

__all__ = [
    "Allocation",
    "AllocatorConfig",
    "ComparisonReport",
    "CovariateTable",
    "MseReport",
    "Selection",
    "SelectorConfig",
    "SynthSpec",
    "allocate",
    "compare",
    "cov_alpha_beta",
    "d_criterion",
    "fisher_information",
    "load_csv",
    "parameter_mses",
    "random_baseline",
    "select_sample",
    "standardize",
    "synthesize",
]
