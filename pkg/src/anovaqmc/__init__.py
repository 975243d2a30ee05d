"""Weighted unanchored ANOVA spaces on R^d and lattice-rule QMC with preintegration."""

from .errors import (
    AnovaQMCError,
    ClassificationInconclusive,
    ConditionViolated,
    DimensionMismatch,
    DimensionTooLarge,
    DivergenceDetected,
    DomainError,
    EigenSolveFailure,
    InvalidVector,
    KinkUndefined,
    MaxDepthExceeded,
    MonotonicityViolated,
    NoConvergence,
    NonFiniteSample,
    ParseError,
)
from .kernel import KernelContext, WeightParams, embed_constant_1d, embed_constant_d, eta, eta_dx, kernel_d
from .lattice import GeneratingVector, korobov_vector, lattice_points, load_vector, mc_estimate, qmc_estimate
from .option import AsianOptionSpec, factorize, geometric_closed_form, price_mc, price_qmc, price_qmc_preint, price_reference
from .weights import Constant, ExpDecay, GaussianDecay, GaussianStd, Logistic, WeightPair, check_conditions, compute_C

__version__ = "0.1.0"

__all__ = [
    "AnovaQMCError",
    "AsianOptionSpec",
    "ClassificationInconclusive",
    "ConditionViolated",
    "Constant",
    "DimensionMismatch",
    "DimensionTooLarge",
    "DivergenceDetected",
    "DomainError",
    "EigenSolveFailure",
    "ExpDecay",
    "GaussianDecay",
    "GaussianStd",
    "GeneratingVector",
    "InvalidVector",
    "KernelContext",
    "KinkUndefined",
    "Logistic",
    "MaxDepthExceeded",
    "MonotonicityViolated",
    "NoConvergence",
    "NonFiniteSample",
    "ParseError",
    "WeightPair",
    "WeightParams",
    "check_conditions",
    "compute_C",
    "embed_constant_1d",
    "embed_constant_d",
    "eta",
    "eta_dx",
    "factorize",
    "geometric_closed_form",
    "kernel_d",
    "korobov_vector",
    "lattice_points",
    "load_vector",
    "mc_estimate",
    "price_mc",
    "price_qmc",
    "price_qmc_preint",
    "price_reference",
    "qmc_estimate",
    "__version__",
]
