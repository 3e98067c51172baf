"""Random compositions of volume-preserving torus maps.

Simulation and verification toolkit: deterministic kicked-torus families,
smooth compactly-supported rotation noise, QR-based Lyapunov spectra, and
Monte Carlo checks of the structural estimates the dynamics relies on
(critical-set measure, cone propagation, singular-value gaps, cone escape,
noise nondegeneracy).
"""

from ._backend import NUMBA_ENABLED, backend_name
from .exceptions import (
    ConeDegeneracyError,
    ConfigError,
    DegenerateSubspaceError,
    InfeasibleConditioningError,
    InvariantViolationError,
    KickedTorusError,
    NotAGraphError,
    UnsupportedVariantError,
    WindowTooLongError,
)
from .families import (
    JacobianBlock,
    MapFamily,
    coupled_standard,
    critical_threshold,
    eval_F,
    eval_F_inverse,
    eval_f,
    generic_l_psi_phi,
    in_critical_set,
    jac_F,
    jac_f,
    jac_f_batch,
    linear_test,
    reduce_mod1,
    strong_coupling2,
)
from .diagnostics import (
    KSReport,
    MeasureEstimate,
    PsiFamily,
    TransversalityReport,
    cone_escape_fraction,
    estimate_critical_measure,
    mc_product_set,
    s_n_closed_form,
    strong_coupling_min_residual,
    strong_coupling_system_residual,
    transversality_psi,
    transversality_residual,
    uniformity_check,
)
from .grassmann import (
    GraphRep,
    JordanAngles,
    SubspaceFrame,
    apply_linear,
    cone_membership,
    d_geodesic,
    d_hausdorff,
    frame_from_graph,
    graph_from_frame,
    graph_transform,
    haar_random_subspace,
    log_restricted_det,
    orthonormalize,
    principal_angles,
    restricted_det,
)
from .lyapunov import (
    ConeTrackingReport,
    LyapunovReport,
    TrajectoryState,
    WindowReport,
    cone_tracking,
    grassmann_sum_estimator,
    qr_spectrum,
    step,
    svd_window,
)
from .noise import (
    NoiseModel,
    NoiseSample,
    RotationalParams,
    apply_R,
    apply_phi,
    bump,
    bump_deriv,
    calibrate_c_max,
    check_cone_condition,
    check_nd_spread,
    composition_locality_margin,
    covering_ok,
    draw_noise_block,
    faithful_centers,
    grid_centers,
    jac_R,
    jac_phi,
    matrix_exp_skew,
    none_model,
    rotational_model,
    sample_noise,
    shift_model,
    torus_distance,
    torus_lift,
)
from .config import (
    CONFIG_KEY_DOCS,
    EXPERIMENTS,
    RunConfig,
    build_family,
    build_noise,
    parse_config,
)
from .runner import RESULT_FIELDS, ResultRow, run
from .streams import derive_stream
from ._version import __version__

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "KickedTorusError",
    "ConfigError",
    "UnsupportedVariantError",
    "DegenerateSubspaceError",
    "NotAGraphError",
    "ConeDegeneracyError",
    "WindowTooLongError",
    "InfeasibleConditioningError",
    "InvariantViolationError",
    "MapFamily",
    "JacobianBlock",
    "coupled_standard",
    "strong_coupling2",
    "generic_l_psi_phi",
    "linear_test",
    "eval_f",
    "jac_f",
    "jac_f_batch",
    "eval_F",
    "eval_F_inverse",
    "jac_F",
    "in_critical_set",
    "critical_threshold",
    "reduce_mod1",
    "SubspaceFrame",
    "GraphRep",
    "JordanAngles",
    "orthonormalize",
    "frame_from_graph",
    "graph_from_frame",
    "principal_angles",
    "d_hausdorff",
    "d_geodesic",
    "cone_membership",
    "graph_transform",
    "apply_linear",
    "restricted_det",
    "log_restricted_det",
    "haar_random_subspace",
    "NoiseModel",
    "NoiseSample",
    "RotationalParams",
    "rotational_model",
    "shift_model",
    "none_model",
    "faithful_centers",
    "grid_centers",
    "covering_ok",
    "bump",
    "bump_deriv",
    "matrix_exp_skew",
    "apply_phi",
    "jac_phi",
    "sample_noise",
    "draw_noise_block",
    "apply_R",
    "jac_R",
    "torus_lift",
    "torus_distance",
    "check_cone_condition",
    "check_nd_spread",
    "composition_locality_margin",
    "calibrate_c_max",
    "TrajectoryState",
    "LyapunovReport",
    "ConeTrackingReport",
    "WindowReport",
    "step",
    "qr_spectrum",
    "grassmann_sum_estimator",
    "cone_tracking",
    "svd_window",
    "MeasureEstimate",
    "TransversalityReport",
    "KSReport",
    "PsiFamily",
    "estimate_critical_measure",
    "s_n_closed_form",
    "mc_product_set",
    "cone_escape_fraction",
    "transversality_psi",
    "transversality_residual",
    "strong_coupling_system_residual",
    "strong_coupling_min_residual",
    "uniformity_check",
    "derive_stream",
    "CONFIG_KEY_DOCS",
    "EXPERIMENTS",
    "RunConfig",
    "parse_config",
    "build_family",
    "build_noise",
    "ResultRow",
    "RESULT_FIELDS",
    "run",
    "__version__",
]
