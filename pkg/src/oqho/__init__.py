"""Invariant states of open quantum harmonic oscillators and their sensitivity to Weyl variations."""

from importlib.metadata import PackageNotFoundError, version

from .bounds import (
    LyapunovPair,
    MCEstimate,
    SensitivityReport,
    bound_F,
    bound_G,
    find_lyapunov_pair,
    hs_qcf_bound,
    mc_norm_bounds,
    mean_sensitivity_norm,
    sensitivity_report,
    tau_factor,
)
from .errors import (
    AccuracyError,
    CoverageError,
    DecompositionError,
    DegeneracyError,
    DivergenceError,
    InvalidInputError,
    NumericalError,
    OqhoError,
    ShiftTooLargeError,
    StabilityError,
    UnsupportedRepresentationError,
)
from .gaussian import (
    GaussianState,
    GramianPair,
    evolve_moments,
    finite_gramian,
    gaussian_qcf,
    gaussian_qpdf,
    heisenberg_residual,
    invariant_covariance,
    invariant_state,
    is_controllable,
    semigroup_apply,
)
from .model import (
    OqhoModel,
    StateSpace,
    build_state_space,
    ccr_position_momentum,
    check_physical_realizability,
    is_hurwitz,
    ito_coupling_matrix,
)
from .perturb import (
    MomentCorrection,
    PerturbationContext,
    apply_perturbation_operator,
    influence_F,
    influence_G,
    mean_correction,
    moment_corrections,
    qcf_correction,
    qcf_correction_gaussian_bump,
    second_moment_correction,
    transient_qcf_correction,
)
from .numerics import SeededSampler
from .spectral import (
    CorrectionField,
    GridSpec,
    field_moment,
    generalized_moment,
    marginal,
    qcf_from_qpdf,
    qpdf_from_qcf,
    sample_qcf_correction,
)
from .weyl import (
    GaussianMixture,
    GaussianTerm,
    TabulatedStrength,
    WeylVariation,
    ZeroStrength,
    eval_psi,
    eval_upsilon,
    l1_bound,
    potential_gradient,
    potential_value,
    weighted_norm,
)

__all__ = [
    "AccuracyError",
    "CorrectionField",
    "CoverageError",
    "DecompositionError",
    "DegeneracyError",
    "DivergenceError",
    "GaussianMixture",
    "GaussianState",
    "GaussianTerm",
    "GramianPair",
    "GridSpec",
    "InvalidInputError",
    "LyapunovPair",
    "MCEstimate",
    "MomentCorrection",
    "NumericalError",
    "OqhoError",
    "OqhoModel",
    "PerturbationContext",
    "SeededSampler",
    "SensitivityReport",
    "ShiftTooLargeError",
    "StabilityError",
    "StateSpace",
    "TabulatedStrength",
    "UnsupportedRepresentationError",
    "WeylVariation",
    "ZeroStrength",
    "apply_perturbation_operator",
    "bound_F",
    "bound_G",
    "build_state_space",
    "ccr_position_momentum",
    "check_physical_realizability",
    "eval_psi",
    "eval_upsilon",
    "evolve_moments",
    "field_moment",
    "find_lyapunov_pair",
    "finite_gramian",
    "gaussian_qcf",
    "gaussian_qpdf",
    "generalized_moment",
    "heisenberg_residual",
    "hs_qcf_bound",
    "influence_F",
    "influence_G",
    "invariant_covariance",
    "invariant_state",
    "is_controllable",
    "is_hurwitz",
    "ito_coupling_matrix",
    "l1_bound",
    "marginal",
    "mc_norm_bounds",
    "mean_correction",
    "mean_sensitivity_norm",
    "moment_corrections",
    "potential_gradient",
    "potential_value",
    "qcf_correction",
    "qcf_correction_gaussian_bump",
    "qcf_from_qpdf",
    "qpdf_from_qcf",
    "sample_qcf_correction",
    "second_moment_correction",
    "semigroup_apply",
    "sensitivity_report",
    "tau_factor",
    "transient_qcf_correction",
    "weighted_norm",
]

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"
