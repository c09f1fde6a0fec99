"""Dynamical decoupling sequences optimized for power-law dephasing noise.

The decoherence prefactor ``I_n`` of an ``n``-pulse sequence under a noise
spectrum ``S(w) ~ w^(1 - alpha)`` is evaluated in closed form
(:mod:`plodd.spectral`), cross-checked by quadrature (:mod:`plodd.oracle`)
and minimised over symmetric pulse instants (:mod:`plodd.optimizer`).
"""
from .errors import (
    DivergentIntegral,
    InfeasibleExponent,
    InsufficientData,
    InvalidExponent,
    MismatchedLength,
    NonConvergence,
    OrderingViolation,
    PloddError,
    ResolutionWarning,
    SequenceValidationError,
)
from .filters import (
    delta_moment_sum,
    filter_magnitude_sq,
    filter_value,
    moment_sum,
    vanishing_order,
)
from .optimizer import (
    KktState,
    OptimizedSequence,
    PloddProblem,
    SolverOptions,
    continuation_path,
    kkt_residual,
    optimize_plodd,
)
from .oracle import DivergenceResidual, QuadratureEstimate, divergence_residual, prefactor_quadrature
from .sequence import (
    PulseSequence,
    SequenceFamily,
    is_symmetric,
    make_cdd,
    make_cpmg,
    make_custom,
    make_udd,
)
from .spectral import (
    Branch,
    PrefactorResult,
    SpectrumExponent,
    coherence,
    decoherence_function,
    prefactor_gradient,
    prefactor_hessian,
    rounding_bound,
    spectral_prefactor,
)
from .analysis import (
    PowerLawFit,
    ScanTable,
    TrendTable,
    alpha_trend,
    fit_power_law,
    max_instant_gap,
    scan_prefactor,
)

__version__ = "0.1.0"

__all__ = [
    "DivergenceResidual",
    "QuadratureEstimate",
    "divergence_residual",
    "prefactor_quadrature",
    "Branch",
    "DivergentIntegral",
    "InfeasibleExponent",
    "InsufficientData",
    "InvalidExponent",
    "KktState",
    "MismatchedLength",
    "NonConvergence",
    "OptimizedSequence",
    "OrderingViolation",
    "PloddError",
    "PloddProblem",
    "PowerLawFit",
    "PrefactorResult",
    "PulseSequence",
    "ResolutionWarning",
    "ScanTable",
    "SequenceFamily",
    "SequenceValidationError",
    "SolverOptions",
    "SpectrumExponent",
    "TrendTable",
    "alpha_trend",
    "coherence",
    "continuation_path",
    "decoherence_function",
    "delta_moment_sum",
    "filter_magnitude_sq",
    "filter_value",
    "fit_power_law",
    "is_symmetric",
    "kkt_residual",
    "make_cdd",
    "make_cpmg",
    "make_custom",
    "make_udd",
    "max_instant_gap",
    "moment_sum",
    "optimize_plodd",
    "prefactor_gradient",
    "prefactor_hessian",
    "rounding_bound",
    "scan_prefactor",
    "spectral_prefactor",
    "vanishing_order",
]
