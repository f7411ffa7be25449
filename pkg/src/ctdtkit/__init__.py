"""Certification and ZOH simulation toolkit for interconnected CT-DT systems."""

__version__ = "0.1.0"

from .certify import (
    Certificate,
    GainConstants,
    bound_matrix_B,
    certificate_lti_dtc,
    certificate_rm,
    certificate_smallgain,
    gain_matrix_rm,
    gain_matrix_smallgain,
    lti_constants,
    lti_dtc_matrix,
    rm_sufficient_margin,
    sampling_bound_Tn,
    scalar_instability_threshold,
    scalar_sample_multiplier,
    small_gain_holds,
    transient_constants_rm,
    transient_constants_smallgain,
)
from .mpc import (
    CondensedCost,
    MpcProblem,
    condense,
    dare_residual,
    dare_solve,
    double_integrator_problem,
    gradient_map,
    gradient_map_lipschitz,
    make_suboptimal_ctdt,
    rm_lognorm_contour,
    unconstrained_gain,
    zstar_jacobian,
    zstar_solve,
)
from .norms import (
    WeightedNorm,
    h_kernel,
    induced_norm_2_weighted,
    log_norm_2_weighted,
    perron_weights,
    schur_2x2_nonneg,
    spectral_abscissa,
    spectral_radius,
)
from .simulate import (
    EstimatedConstants,
    InvarianceReport,
    Trajectory,
    check_dtc_bound,
    check_forward_invariance,
    empirical_decay_rate,
    estimate_constants,
    simulate_batch,
    simulate_ctdt,
)
from .systems import (
    CtDtSystem,
    FixedPointResult,
    LtiSystem,
    compose_G,
    fixed_point_zstar,
    lti_reduced_matrix,
    make_lti_ctdt,
    reduced_model,
    zoh_discretize,
)

__all__ = [
    "__version__",
    "Certificate",
    "CondensedCost",
    "CtDtSystem",
    "EstimatedConstants",
    "FixedPointResult",
    "GainConstants",
    "InvarianceReport",
    "LtiSystem",
    "MpcProblem",
    "Trajectory",
    "WeightedNorm",
    "bound_matrix_B",
    "certificate_lti_dtc",
    "certificate_rm",
    "certificate_smallgain",
    "check_dtc_bound",
    "check_forward_invariance",
    "compose_G",
    "condense",
    "dare_residual",
    "dare_solve",
    "double_integrator_problem",
    "empirical_decay_rate",
    "estimate_constants",
    "fixed_point_zstar",
    "gain_matrix_rm",
    "gain_matrix_smallgain",
    "gradient_map",
    "gradient_map_lipschitz",
    "h_kernel",
    "induced_norm_2_weighted",
    "log_norm_2_weighted",
    "lti_constants",
    "lti_dtc_matrix",
    "lti_reduced_matrix",
    "make_lti_ctdt",
    "make_suboptimal_ctdt",
    "perron_weights",
    "reduced_model",
    "rm_lognorm_contour",
    "rm_sufficient_margin",
    "sampling_bound_Tn",
    "scalar_instability_threshold",
    "scalar_sample_multiplier",
    "schur_2x2_nonneg",
    "simulate_batch",
    "simulate_ctdt",
    "small_gain_holds",
    "spectral_abscissa",
    "spectral_radius",
    "transient_constants_rm",
    "transient_constants_smallgain",
    "unconstrained_gain",
    "zoh_discretize",
    "zstar_jacobian",
    "zstar_solve",
]
