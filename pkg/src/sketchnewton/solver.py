"""Outer loop of the adaptive sketched Newton method.

Per iteration: evaluate the oracle, build the modified Newton system, run
the randomized inner solver until the accuracy condition holds, tighten the
penalty parameters until the direction is a descent direction of the exact
augmented Lagrangian (resuming the inner solver against the shrunken
accuracy budget after every tightening), then backtrack on the merit
function and take the step.  Penalty parameters carry over to the next
iteration; convergence is declared at the top of an iteration from the
freshly evaluated KKT residual.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .flops import FlopCounter, dot, matvec
from .kkt import (
    KKTSystem,
    assemble_from_parts,
    delta_trial,
    exact_solve,
    modify_hessian,
)
from .merit import (
    LineSearchError,
    PenaltyState,
    armijo_core,
    descent_ok,
    merit_gradient_from_parts,
    merit_value_from_parts,
    update_penalty,
)
from .problems import EvalFailure, Iterate, ProblemOracle, Request, evaluate, tallied_view
from .sketch import (
    GAUSSIAN_VECTOR,
    InnerBudgetError,
    SketchDistribution,
    accuracy_threshold,
    fresh_state,
    run_inner_loop,
)


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INNER_BUDGET = "inner_budget"
    LINE_SEARCH_FAIL = "line_search_fail"
    EVAL_FAIL = "eval_fail"


class ThetaKind(enum.Enum):
    CONSTANT = "constant"
    HARMONIC = "harmonic"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class ThetaSchedule:
    """Inner-accuracy sharpening sequence theta_k in (0, 1]."""

    kind: ThetaKind
    param: float = 1.0

    def __post_init__(self) -> None:
        if self.kind is ThetaKind.CONSTANT and not (0.0 < self.param <= 1.0):
            raise ValueError("constant theta must lie in (0, 1]")
        if self.kind is ThetaKind.GEOMETRIC and not (0.0 < self.param < 1.0):
            raise ValueError("geometric ratio must lie in (0, 1)")


CONSTANT_ONE = ThetaSchedule(ThetaKind.CONSTANT, 1.0)
HARMONIC = ThetaSchedule(ThetaKind.HARMONIC)


def theta(schedule: ThetaSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    if schedule.kind is ThetaKind.CONSTANT:
        return schedule.param
    if schedule.kind is ThetaKind.HARMONIC:
        return 1.0 / (k + 1)
    return schedule.param**k


@dataclass
class SolverConfig:
    """Inputs of the method with the benchmark defaults."""

    eta1_0: float = 1.0
    eta2_0: float = 0.1
    delta_0: float = 0.1
    xi_B: float = 0.1
    beta: float = 0.1
    nu: float = 1.5
    theta_schedule: ThetaSchedule = CONSTANT_ONE
    sketch: SketchDistribution = GAUSSIAN_VECTOR
    kkt_tol: float = 1e-4
    max_outer: int = 10_000
    inner_cap: Optional[int] = None  # None -> max(50 (n+m)^2, 20000)
    seed: int = 0
    alpha_min: float = 1e-12
    audit: bool = False

    def cap_for(self, dim: int) -> int:
        # the quadratic default starves small systems, whose accuracy
        # thresholds still need a few thousand projections; floor it
        return self.inner_cap if self.inner_cap is not None else max(50 * dim * dim, 20_000)


@dataclass
class IterationRecord:
    k: int
    kkt_norm: float
    alpha: Optional[float]
    inner_j: int
    outer_while_rounds: int
    eta1: float
    eta2: float
    delta: float
    flops_snapshot: int


@dataclass
class AuditRecord:
    """Acceptance-time inequalities, stored for verification."""

    k: int
    residual_norm: float
    accuracy_rhs: float
    descent_lhs: float
    descent_rhs: float
    armijo_lhs: float
    armijo_rhs: float


@dataclass
class SolveReport:
    status: Status
    iterations: list[IterationRecord]
    z: Iterate
    obj_cons_evals: int
    grad_jac_evals: int
    hess_evals: int
    total_flops: int
    z_history: list[np.ndarray]
    audit: list[AuditRecord] = field(default_factory=list)

    @property
    def final_kkt(self) -> float:
        return self.iterations[-1].kkt_norm if self.iterations else float("nan")


class EstimateError(Exception):
    """High-accuracy reference solve failed to converge."""


_ALL_FIELDS = {Request.F, Request.C, Request.GRAD, Request.JAC, Request.HESS}


def solve(problem: ProblemOracle, z0: Iterate, cfg: SolverConfig) -> SolveReport:
    """Run the sketched Newton method from z0; never raises on solver-level
    failures, which are reported through the status instead."""
    return _drive(problem, z0, cfg, exact_directions=False)


def estimate_solution(problem: ProblemOracle, z0: Iterate, max_outer: int = 500) -> Iterate:
    """Reference solution from a run whose inner solver is the direct solve.

    Raises EstimateError unless the run converges to KKT residual 1e-10.
    """
    cfg = SolverConfig(kkt_tol=1e-10, max_outer=max_outer)
    report = _drive(problem, z0, cfg, exact_directions=True)
    if report.status is not Status.CONVERGED:
        raise EstimateError(f"reference solve ended with status {report.status.value}")
    return report.z


def _drive(problem: ProblemOracle, z0: Iterate, cfg: SolverConfig, exact_directions: bool) -> SolveReport:
    fl = FlopCounter()
    rng = np.random.default_rng(cfg.seed)
    pen = PenaltyState(cfg.eta1_0, cfg.eta2_0, cfg.delta_0, cfg.nu, cfg.beta)
    z = Iterate(z0.x.copy(), z0.lam.copy())
    dim = z.n + z.m
    cap = cfg.cap_for(dim)
    # count this solve's own calls even when the oracle is shared
    problem = tallied_view(problem)
    records: list[IterationRecord] = []
    audits: list[AuditRecord] = []
    history = [z.stacked()]
    status = Status.MAX_ITER

    k = 0
    while True:
        try:
            ev = evaluate(problem, z, _ALL_FIELDS, fl)
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        grad_x_lag = ev.grad_f + matvec(ev.jac.T, z.lam, fl)
        kkt_norm = float(np.linalg.norm(np.concatenate([grad_x_lag, ev.c])))
        if kkt_norm <= cfg.kkt_tol:
            records.append(
                IterationRecord(k, kkt_norm, None, 0, 0, pen.eta1, pen.eta2, pen.delta, fl.count)
            )
            status = Status.CONVERGED
            break
        if k >= cfg.max_outer:
            status = Status.MAX_ITER
            break

        B = modify_hessian(ev.hess_lagrangian, ev.jac, cfg.xi_B, fl)
        sys = assemble_from_parts(B, ev.jac, grad_x_lag, ev.c, ev.hess_lagrangian, cfg.xi_B, fl)
        th = theta(cfg.theta_schedule, k)
        sys.delta_trial = delta_trial(pen.eta1, pen.eta2, pen.beta, sys.Upsilon, sys.Psi)
        pen = replace(pen, delta=min(pen.delta, sys.delta_trial))

        state = fresh_state(sys, rng)
        rounds = 0
        failed = None
        while True:
            rounds += 1
            if exact_directions:
                state.dz = exact_solve(sys.Gamma, sys.rhs, fl)
                state.r = sys.Gamma @ state.dz + sys.rhs
            else:
                try:
                    state = run_inner_loop(sys, state, th, pen.delta, cap, cfg.sketch, fl)
                except InnerBudgetError:
                    failed = Status.INNER_BUDGET
                    break
            mgrad = merit_gradient_from_parts(
                ev.c, ev.grad_f, ev.jac, ev.hess_lagrangian, z.lam, pen.eta1, pen.eta2, fl
            )
            dir_deriv = dot(mgrad, state.dz, fl)
            if descent_ok(mgrad, state.dz, pen.eta2, kkt_norm):
                break
            pen = update_penalty(
                pen, lambda e1, e2: delta_trial(e1, e2, pen.beta, sys.Upsilon, sys.Psi)
            )
            sys.delta_trial = delta_trial(pen.eta1, pen.eta2, pen.beta, sys.Upsilon, sys.Psi)
        if failed is not None:
            status = failed
            break

        # acceptance-time guarantees: accuracy condition on the recomputed
        # residual and the descent condition, as used by the loop exits
        res_norm = float(np.linalg.norm(state.r))
        acc_rhs = accuracy_threshold(sys, th, pen.delta)
        if not exact_directions:
            assert res_norm <= acc_rhs
        assert dir_deriv <= -0.5 * pen.eta2 * kkt_norm**2
        if cfg.audit and not exact_directions:
            dz_exact = exact_solve(sys.Gamma, sys.rhs)
            err = np.linalg.norm(state.dz - dz_exact)
            assert err <= th * pen.delta * np.linalg.norm(dz_exact) * (1.0 + 1e-8)

        phi0 = merit_value_from_parts(
            ev.f, ev.c, ev.grad_f, ev.jac, z.lam, pen.eta1, pen.eta2, fl
        )

        def phi(alpha: float) -> float:
            trial = Iterate.from_stacked(z.stacked() + alpha * state.dz, z.n, z.m)
            tev = evaluate(problem, trial, {Request.F, Request.C, Request.GRAD, Request.JAC}, fl)
            return merit_value_from_parts(
                tev.f, tev.c, tev.grad_f, tev.jac, trial.lam, pen.eta1, pen.eta2, fl
            )

        try:
            alpha, phi_acc = armijo_core(phi, phi0, dir_deriv, pen.beta, cfg.alpha_min)
        except LineSearchError:
            status = Status.LINE_SEARCH_FAIL
            break
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        assert phi_acc <= phi0 + alpha * pen.beta * dir_deriv
        audits.append(
            AuditRecord(
                k,
                res_norm,
                acc_rhs,
                dir_deriv,
                -0.5 * pen.eta2 * kkt_norm**2,
                phi_acc,
                phi0 + alpha * pen.beta * dir_deriv,
            )
        )

        z = Iterate.from_stacked(z.stacked() + alpha * state.dz, z.n, z.m)
        records.append(
            IterationRecord(
                k, kkt_norm, alpha, state.j, rounds, pen.eta1, pen.eta2, pen.delta, fl.count
            )
        )
        history.append(z.stacked())
        k += 1

    oc, gj, he = problem.counters.snapshot()
    return SolveReport(
        status=status,
        iterations=records,
        z=z,
        obj_cons_evals=oc,
        grad_jac_evals=gj,
        hess_evals=he,
        total_flops=fl.count,
        z_history=history,
        audit=audits,
    )
