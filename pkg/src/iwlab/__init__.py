"""
The iwlab package.

A desk-scale laboratory that checks the Itô-Wentzell formula, its real-valued version, and the
stochastic Fubini theorem pathwise on simulated Wiener noise.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .driving import (
    DrivingCoefficients,
    DrivingPath,
    StoppingRule,
    apply_L,
    apply_Lambda,
    diffusion_matrix,
    lambda_norm_sq,
    simulate_driving,
    stopping_index,
)
from .errors import (
    CapabilityError,
    ConfigError,
    DomainError,
    InvalidArgumentError,
    IWLabError,
    LimitExceededError,
    NotFoundError,
    NumericError,
    TruncationError,
)
from .fields import (
    Ball,
    ClosedFormField,
    MollifiedField,
    MollifierKernel,
    PairedField,
    QuadratureRule,
    SpatialField,
    TestFunction,
    class_membership_diagnostic,
    mollify,
    pair,
    second_moment,
    shifted_pair,
    test_panel,
)
from .fubini import (
    FubiniReport,
    HolderReport,
    Lattice,
    MartingaleFieldSample,
    SupIntegralReport,
    build_field_sample,
    compensator,
    cosine_family,
    fubini_both_sides,
    geometric_cosine_family,
    holder_field_check,
    linear_field,
    realized_compensator,
    sine_field,
    sup_integral_bound_check,
)
from .noise import (
    TimeGrid,
    WienerBank,
    generate_bank,
    generate_banks,
    nested_banks,
    refine,
    restrict,
)
from .scenarios import Scenario, lookup, registry, scenario_names
from .stats import Check, McEstimate, RateFit, adjudicate, fit_rate, mc_estimate
from .suite import CheckRecord, RunReport, run_suite, write_artifacts
from .wentzell import (
    DerivativeRatio,
    IdentityResidual,
    ResidualCurve,
    WeakEvolution,
    closed_form_lhs_error,
    dini_tail,
    driver_sensitivity,
    evolve_weak,
    hypothesis_diagnostics,
    lambda_h_tail,
    mollified_pathway,
    product_rule_check,
    real_iw_both_sides,
    real_iw_scenario,
    residual_curve,
    rhs_class_diagnostics,
    tail_diagnostic,
    transfer_derivative_check,
    transfer_derivative_ratio,
    weak_iw_both_sides,
)
