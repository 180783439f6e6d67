"""Early-stopped mirror descent for least squares.

Problems and risks, mirror-map geometry, discrete/continuous descent
runners with data-dependent stopping, offset Rademacher complexity
estimation, explicit-regularization baselines, and seeded experiments.
"""

__version__ = "0.1.0"

from .problems import (  # noqa: F401
    GaussianLinearLaw,
    KernelProblem,
    RegressionProblem,
    empirical_distance_sq,
    empirical_risk,
    gradient_alignment_sides,
    load_problem,
    population_risk,
    rbf_gram,
    risk_gradient,
    sample_problem,
    save_problem,
    sparse_sign_law,
)
from .maps import (  # noqa: F401
    EuclideanMap,
    HypentropyMap,
    MirrorMap,
    QuadraticMap,
    SpecializedUpdateRequired,
    hypentropy_ball_radius,
    map_from_json,
    map_to_json,
    strong_convexity_modulus,
    three_point_gap,
)
from .engine import (  # noqa: F401
    DivergenceError,
    IterateRecord,
    L1Schedule,
    StoppingReport,
    Trajectory,
    eg_pm_step,
    first_crossing,
    kernel_md_step,
    l1_hyperparameters,
    md_step,
    run_continuous,
    run_discrete,
    run_eg_pm,
    run_kernel_discrete,
)
from .offset import (  # noqa: F401
    L2Ball,
    OffsetComplexityEstimate,
    OffsetConditionReport,
    RKHSBall,
    ball_quadratic_max,
    bernstein_margin,
    excess_risk_bound_constants,
    offset_complexity_exhaustive,
    offset_complexity_mc,
    offset_condition_residual,
    offset_condition_worst_residual,
)
from .baselines import (  # noqa: F401
    NonConvergenceError,
    RankDeficiencyError,
    RegularizationPath,
    constrained_erm_ball,
    constrained_erm_quadratic,
    lasso_path,
    lasso_solve,
    population_ball_minimizer,
    population_ellipsoid_minimizer,
    ridge_path,
    ridge_solve,
)
from .backend import active_backend  # noqa: F401
