"""Proximal ADMM with quasi-Newton variable metrics for Lasso problems."""

from .estimator import AdmmLasso
from .linalg import (
    CholeskyFactor,
    NotPositiveDefiniteError,
    PowerIterationError,
    cholesky,
    matvec,
    matvec_transpose,
    max_eigenvalue_sym,
    solve_spd,
)
from .metric import (
    BfgsMetric,
    CurvatureError,
    DampedBMetric,
    LbfgsMetric,
    UpdatePair,
    bfgs_update_B,
    bfgs_update_H,
    damped_update,
    lbfgs_apply,
    lbfgs_push,
    make_pair,
    verify_order,
)
from .problem import (
    GeneratorSpec,
    LassoProblem,
    generate,
    kkt_residual,
    load_bundle,
    m_apply,
    objective,
    problem_from_data,
    save_bundle,
    soft_threshold,
    with_beta,
)
from .solver import (
    AdmmState,
    IterationReport,
    SolveTrace,
    SolverConfig,
    VARIANTS,
    check_stop,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmLasso",
    "AdmmState",
    "BfgsMetric",
    "CholeskyFactor",
    "CurvatureError",
    "DampedBMetric",
    "GeneratorSpec",
    "IterationReport",
    "LassoProblem",
    "LbfgsMetric",
    "NotPositiveDefiniteError",
    "PowerIterationError",
    "SolveTrace",
    "SolverConfig",
    "UpdatePair",
    "VARIANTS",
    "bfgs_update_B",
    "bfgs_update_H",
    "check_stop",
    "cholesky",
    "damped_update",
    "generate",
    "kkt_residual",
    "lbfgs_apply",
    "lbfgs_push",
    "load_bundle",
    "m_apply",
    "make_pair",
    "matvec",
    "matvec_transpose",
    "max_eigenvalue_sym",
    "objective",
    "problem_from_data",
    "save_bundle",
    "soft_threshold",
    "solve",
    "solve_spd",
    "verify_order",
    "with_beta",
]
