"""Adaptive sketched Newton solver for equality-constrained minimization,
with deterministic baselines and a benchmarking harness."""

from .problems import (
    Dataset,
    EvalBundle,
    EvalCounters,
    EvalFailure,
    Iterate,
    LibsvmParseError,
    ProblemOracle,
    Request,
    evaluate,
    make_logreg_problem,
    make_pde_problem,
    make_qp_problem,
    parse_libsvm,
    serialize_libsvm,
)
from .kkt import (
    JacobianRankError,
    KKTSystem,
    assemble,
    delta_trial,
    exact_solve,
    modify_hessian,
    null_space_basis,
    residual,
)
from .sketch import (
    GAUSSIAN_VECTOR,
    RANDOMIZED_KACZMARZ,
    InnerBudgetError,
    InnerState,
    SketchDistribution,
    SketchKind,
    draw_sketch,
    project_step,
    run_inner_loop,
)
from .merit import (
    LineSearchError,
    PenaltyState,
    armijo_backtrack,
    descent_ok,
    merit_gradient,
    merit_value,
    update_penalty,
)
from .solver import (
    EstimateError,
    SolveReport,
    SolverConfig,
    Status,
    ThetaKind,
    ThetaSchedule,
    estimate_solution,
    solve,
    theta,
)
from .baselines import (
    AuglagConfig,
    ByrdAdaptiveConfig,
    ByrdConfig,
    GmresError,
    gmres,
    l1_merit,
    solve_auglag,
    solve_byrd,
    solve_byrd_adaptive,
)

__all__ = [name for name in dir() if not name.startswith("_")]
