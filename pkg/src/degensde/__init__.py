"""Numerical laboratory for degenerate Ito diffusions.

The SDE under study is

    dX_t = dispersion(X_t) * sigma(X_t) dW_t + drift(X_t) dt,    X_0 = y,

where the scalar dispersion factor is allowed to vanish on a small
degeneracy set.  The package provides the standard coefficient families,
machine checks for the well-posedness hypotheses (H1)-(H4), a discrete
maximal-function/mollification toolkit, a coupled-path Euler-Maruyama
engine, and Monte-Carlo verification experiments with reproducible
reports.
"""

from ._version import __version__

from .coefficients import (
    BumpLatticeFamily,
    CoefficientError,
    CoefficientSet,
    ConstantFamily,
    CubicDriftFamily,
    EvaluationError,
    ExponentSelection,
    H2Report,
    H3Report,
    PowerLawFamily,
    RadialSamplePlan,
    admissible_alpha_bound,
    build_family,
    check_h2,
    check_h3_window,
    eval_all,
    select_exponents,
)
from .analysis import (
    GridField,
    GridError,
    Mollifier,
    check_pointwise_maximal_bound,
    cutoff_extend,
    default_radius_menu,
    gradient_norm_field,
    lp_norm,
    maximal_function,
    mollify,
    sample_on_grid,
)
from .sde_sim import (
    CoupledPair,
    PathSample,
    SimConfig,
    SimulationError,
    brownian_increments,
    em_coupled_pair,
    em_path,
    first_exit_step,
    occupation_time,
)
from .verify import (
    EstimateReport,
    ExperimentConfig,
    VerificationError,
    config_hash,
    krylov_ratio_experiment,
    maximal_suite,
    nonexplosion_experiment,
    occupation_decay_experiment,
    pathwise_uniqueness_signature,
    run_experiment,
)

__all__ = [
    "__version__",
    "BumpLatticeFamily",
    "CoefficientError",
    "CoefficientSet",
    "ConstantFamily",
    "CoupledPair",
    "CubicDriftFamily",
    "EstimateReport",
    "EvaluationError",
    "ExperimentConfig",
    "ExponentSelection",
    "GridError",
    "GridField",
    "H2Report",
    "H3Report",
    "Mollifier",
    "PathSample",
    "PowerLawFamily",
    "RadialSamplePlan",
    "SimConfig",
    "SimulationError",
    "VerificationError",
    "admissible_alpha_bound",
    "brownian_increments",
    "build_family",
    "config_hash",
    "check_h2",
    "check_h3_window",
    "check_pointwise_maximal_bound",
    "cutoff_extend",
    "default_radius_menu",
    "em_coupled_pair",
    "em_path",
    "eval_all",
    "first_exit_step",
    "gradient_norm_field",
    "krylov_ratio_experiment",
    "lp_norm",
    "maximal_function",
    "maximal_suite",
    "mollify",
    "nonexplosion_experiment",
    "occupation_decay_experiment",
    "occupation_time",
    "pathwise_uniqueness_signature",
    "run_experiment",
    "sample_on_grid",
    "select_exponents",
]
