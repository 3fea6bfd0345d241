"""Exit problems for small-noise spectral evolution equations.

Simulation of the stochastic dynamics, evaluation of the control-energy
rate functional, quasipotential computation by control optimization, and
operator-norm diagnostics, with a command-line experiment harness.
"""
from .action import (
    ControlPath,
    MinimizeOptions,
    QuasipotentialResult,
    TargetSpec,
    action_value,
    controlled_trajectory,
    quasipotential_linear,
    quasipotential_minimize,
    rate_function_of_path,
)
from .dynamics import apply_B, apply_F, check_B_lipschitz, check_dissipativity, noise_matrix
from .kernels import BACKEND, USE_NUMBA
from .model import (
    FKind,
    BKind,
    ModelSpec,
    NormKind,
    SpectralField,
    builtin_spec,
    in_domain,
    parse_model_spec,
    semigroup_apply,
    sup_norm,
    unit_mode,
    zero_field,
)
from .operators import (
    DiscretizedOperator,
    apriori_bound_check,
    build_Lt,
    hqz_series_check,
    infinite_horizon_norm,
    norm_decay_check,
    operator_norm,
    singular_value_profile,
)
from .simulate import (
    ExitEnsembleStats,
    ExitRecord,
    SimConfig,
    Trajectory,
    attraction_check,
    default_t_max,
    ensemble_exit,
    run_to_exit,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BKind",
    "ControlPath",
    "DiscretizedOperator",
    "ExitEnsembleStats",
    "ExitRecord",
    "FKind",
    "MinimizeOptions",
    "ModelSpec",
    "NormKind",
    "QuasipotentialResult",
    "SimConfig",
    "SpectralField",
    "TargetSpec",
    "Trajectory",
    "USE_NUMBA",
    "action_value",
    "apply_B",
    "apply_F",
    "apriori_bound_check",
    "attraction_check",
    "build_Lt",
    "builtin_spec",
    "check_B_lipschitz",
    "check_dissipativity",
    "controlled_trajectory",
    "default_t_max",
    "ensemble_exit",
    "hqz_series_check",
    "in_domain",
    "infinite_horizon_norm",
    "noise_matrix",
    "norm_decay_check",
    "operator_norm",
    "parse_model_spec",
    "quasipotential_linear",
    "quasipotential_minimize",
    "rate_function_of_path",
    "run_to_exit",
    "semigroup_apply",
    "singular_value_profile",
    "step",
    "sup_norm",
    "unit_mode",
    "zero_field",
]
