"""Deterministic comparison solvers: two inexact SQP variants driven by
GMRES with an l1 penalty merit function, and an augmented Lagrangian method.

The two SQP variants share the same Newton system as the main solver but
gate the GMRES residual with fixed (byrd) or adaptively tightened
(byrd_adaptive) tests, and they line-search on f + pi * ||c||_1 instead of
the smooth augmented Lagrangian.  Their termination tests and the model
reduction condition follow the standard residual-based readings and are kept
on one configuration surface so alternates can be swapped without touching
the solver loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flops import FlopCounter, dot, matvec, spectral_norm, sym_eigvals
from .kkt import assemble_from_parts, modify_hessian
from .merit import LineSearchError
from .problems import EvalFailure, Iterate, ProblemOracle, Request, evaluate, tallied_view
from .solver import IterationRecord, SolveReport, Status

_ALL = {Request.F, Request.C, Request.GRAD, Request.JAC, Request.HESS}


class GmresError(Exception):
    """Iteration budget exhausted; carries the best iterate found."""

    def __init__(self, x: np.ndarray, res_norm: float):
        self.x = x
        self.res_norm = res_norm
        super().__init__(f"gmres stalled at residual {res_norm:.3e}")


class _GmresStepper:
    """Full-memory Arnoldi process for A x = b from x0 = 0.

    step() performs one Arnoldi iteration (maintaining the QR factorization
    of the Hessenberg matrix by Givens rotations) and returns the current
    least-squares iterate.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, fl: FlopCounter | None = None):
        self.A = A
        self.b = b
        self.fl = fl
        self.n = b.size
        self.beta = float(np.linalg.norm(b))
        self.V = np.zeros((self.n, self.n + 1))
        self.Hc = np.zeros((self.n + 1, self.n))
        self.cs = np.zeros(self.n)
        self.sn = np.zeros(self.n)
        self.g = np.zeros(self.n + 1)
        self.j = 0
        self.exhausted = self.beta == 0.0
        if not self.exhausted:
            self.V[:, 0] = b / self.beta
            self.g[0] = self.beta

    @property
    def residual_norm(self) -> float:
        return abs(self.g[self.j]) if self.beta > 0 else 0.0

    def solution(self) -> np.ndarray:
        if self.j == 0:
            return np.zeros(self.n)
        R = self.Hc[: self.j, : self.j]
        y = np.linalg.solve(R, self.g[: self.j])
        if self.fl is not None:
            self.fl.add(self.j**2 + self.n * self.j)
        return self.V[:, : self.j] @ y

    def step(self) -> np.ndarray:
        if self.exhausted:
            return self.solution()
        j = self.j
        w = matvec(self.A, self.V[:, j], self.fl)
        for i in range(j + 1):
            h = dot(self.V[:, i], w, self.fl)
            self.Hc[i, j] = h
            w = w - h * self.V[:, i]
        hnext = float(np.linalg.norm(w))
        if self.fl is not None:
            self.fl.add(self.n * (j + 2))
        # apply the accumulated rotations to the new column
        for i in range(j):
            t = self.cs[i] * self.Hc[i, j] + self.sn[i] * self.Hc[i + 1, j]
            self.Hc[i + 1, j] = -self.sn[i] * self.Hc[i, j] + self.cs[i] * self.Hc[i + 1, j]
            self.Hc[i, j] = t
        denom = float(np.hypot(self.Hc[j, j], hnext))
        if denom == 0.0:
            self.exhausted = True
            return self.solution()
        self.cs[j] = self.Hc[j, j] / denom
        self.sn[j] = hnext / denom
        self.Hc[j, j] = denom
        self.g[j + 1] = -self.sn[j] * self.g[j]
        self.g[j] = self.cs[j] * self.g[j]
        self.j = j + 1
        if hnext <= 1e-14 * self.beta or self.j >= self.n:
            self.exhausted = True
        else:
            self.V[:, j + 1] = w / hnext
        return self.solution()


def gmres(
    A: np.ndarray,
    b: np.ndarray,
    rel_tol: float,
    max_iter: Optional[int] = None,
    fl: FlopCounter | None = None,
) -> np.ndarray:
    """Solve A x = b to ||Ax - b|| <= rel_tol * ||b|| without restarts."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.size:
        raise ValueError("gmres needs a square system")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(b.size)
    limit = max_iter if max_iter is not None else b.size
    stepper = _GmresStepper(A, b, fl)
    x = np.zeros(b.size)
    for _ in range(limit):
        x = stepper.step()
        if stepper.residual_norm <= rel_tol * bnorm:
            return x
        if stepper.exhausted:
            break
    true_res = float(np.linalg.norm(A @ x - b))
    if true_res <= rel_tol * bnorm:
        return x
    raise GmresError(x, true_res)


def l1_merit(problem: ProblemOracle, x: np.ndarray, pi: float, fl: FlopCounter | None = None) -> float:
    """f(x) + pi * ||c(x)||_1."""
    z = Iterate(np.asarray(x, dtype=float), np.zeros(problem.m))
    ev = evaluate(problem, z, {Request.F, Request.C}, fl)
    return ev.f + pi * float(np.sum(np.abs(ev.c)))


@dataclass
class ByrdConfig:
    """Fixed-accuracy inexact SQP parameters (the l1-merit baseline).

    tt2_form selects the feasibility-progress acceptance: "progress" accepts
    once the linearized constraints drop to eps * ||c|| (the reading whose
    behavior matches the reference method's eval counts), "min_form" uses
    eps * min(||c||, ||c + G dx|| + tau ||c||) instead.
    """

    eta: float = 1e-8
    kappa1: float = 0.1
    eps: float = 0.1
    tau: float = 0.1
    xi_B: float = 0.1
    pi0: float = 1.0
    kappa: float = 1.0  # reserved for alternate termination-test readings
    tt2_form: str = "progress"
    kkt_tol: float = 1e-4
    max_outer: int = 10_000
    alpha_min: float = 1e-12

    @property
    def sigma(self) -> float:
        return self.tau * (1.0 - self.eps)

    @staticmethod
    def kappa2_for(grad_l0: np.ndarray, c0: np.ndarray) -> float:
        """Dual-residual leash max(1, ||grad L_0||_1 / (||c_0||_1 + 1))."""
        return max(1.0, float(np.sum(np.abs(grad_l0))) / (float(np.sum(np.abs(c0))) + 1.0))


@dataclass
class ByrdAdaptiveConfig:
    """Adaptive variant: residual gate kappa_k shrinks on model failures."""

    eta: float = 1e-8
    kappa0: float = 0.1
    kappa1: float = 0.1
    eps: float = 0.1
    tau: float = 0.1
    xi_B: float = 0.1
    pi0: float = 1.0
    nu: float = 1.5
    kkt_tol: float = 1e-4
    max_outer: int = 10_000
    alpha_min: float = 1e-12

    @property
    def sigma(self) -> float:
        return self.tau * (1.0 - self.eps)


@dataclass
class AuglagConfig:
    """Classical augmented Lagrangian with an inexact Newton subsolver."""

    kappa: float = 1e-4
    tau0: float = 0.1
    eta: float = 0.1
    mu0: float = 1.0
    nu_mu: float = 1.5
    nu_tau: float = 0.5
    xi_B: float = 0.1
    kkt_tol: float = 1e-4
    max_outer: int = 10_000
    max_subiters: int = 100
    alpha_min: float = 1e-12


def _model_reduction(
    grad_f: np.ndarray,
    B: np.ndarray,
    c: np.ndarray,
    jac: np.ndarray,
    dx: np.ndarray,
    pi: float,
    sigma: float,
    fl: FlopCounter | None,
) -> tuple[float, float, float, float]:
    """Returns (delta_m, curvature_term, linearized_reduction, rhs_scale).

    delta_m(dx; pi) = -grad_f'dx - 0.5 dx'B dx + pi (||c||_1 - ||c + G dx||_1)
    and the condition requires delta_m >= max(0.5 dx'B dx, 0)
    + sigma pi max(||c||_1, ||c + G dx||_1 - ||c||_1).
    """
    q_curv = 0.5 * dot(dx, matvec(B, dx, fl), fl)
    lin = float(np.sum(np.abs(c)))
    lin_after = float(np.sum(np.abs(c + matvec(jac, dx, fl))))
    red = lin - lin_after
    delta_m = -dot(grad_f, dx, fl) - q_curv + pi * red
    rhs_scale = max(lin, lin_after - lin)
    return delta_m, q_curv, red, rhs_scale


def _mrc_holds(delta_m: float, q_curv: float, pi: float, sigma: float, rhs_scale: float) -> bool:
    return delta_m >= max(q_curv, 0.0) + sigma * pi * rhs_scale


def _l1_backtrack(
    problem: ProblemOracle,
    z: Iterate,
    dz: np.ndarray,
    pi: float,
    delta_m: float,
    phi0: float,
    eta: float,
    alpha_min: float,
    fl: FlopCounter | None,
) -> float:
    """Armijo on the l1 merit against the model decrease delta_m > 0.

    phi0 is the merit value at z, built from the already-evaluated f and c.
    """
    if delta_m <= 0.0:
        raise LineSearchError(f"model decrease {delta_m:.3e} is not positive")
    alpha = 1.0
    while True:
        trial = z.stacked() + alpha * dz
        value = l1_merit(problem, trial[: z.n], pi, fl)
        if value <= phi0 - eta * alpha * delta_m:
            return alpha
        alpha *= 0.5
        if alpha < alpha_min:
            raise LineSearchError("l1 line search failed")


def solve_byrd(problem: ProblemOracle, z0: Iterate, cfg: ByrdConfig | None = None) -> SolveReport:
    """Inexact SQP with fixed GMRES termination tests.

    The direction is accepted once the full residual is small relative to the
    KKT residual (test 1) or the constraint block of the residual shows
    sufficient feasibility progress (test 2); the penalty rises when the
    model reduction condition fails on a test-2 acceptance.
    """
    cfg = cfg or ByrdConfig()
    fl = FlopCounter()
    z = Iterate(z0.x.copy(), z0.lam.copy())
    pi = cfg.pi0
    sigma = cfg.sigma
    kappa2 = None
    problem = tallied_view(problem)
    records: list[IterationRecord] = []
    history = [z.stacked()]
    status = Status.MAX_ITER

    k = 0
    while True:
        try:
            ev = evaluate(problem, z, _ALL, fl)
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        grad_x_lag = ev.grad_f + matvec(ev.jac.T, z.lam, fl)
        grad_l = np.concatenate([grad_x_lag, ev.c])
        kkt_norm = float(np.linalg.norm(grad_l))
        if kappa2 is None:
            kappa2 = ByrdConfig.kappa2_for(grad_l, ev.c)
        if kkt_norm <= cfg.kkt_tol:
            records.append(IterationRecord(k, kkt_norm, None, 0, 0, pi, cfg.kappa1, float("nan"), fl.count))
            status = Status.CONVERGED
            break
        if k >= cfg.max_outer:
            break

        B = modify_hessian(ev.hess_lagrangian, ev.jac, cfg.xi_B, fl)
        sys = assemble_from_parts(B, ev.jac, grad_x_lag, ev.c, ev.hess_lagrangian, cfg.xi_B, fl)
        stepper = _GmresStepper(sys.Gamma, -sys.rhs, fl)
        dz = np.zeros(z.n + z.m)
        tt2 = False
        c_norm = float(np.linalg.norm(ev.c))
        while True:
            dz = stepper.step()
            r = sys.Gamma @ dz + sys.rhs
            fl.add(sys.Gamma.size)
            rc_norm = float(np.linalg.norm(r[z.n :]))
            r_norm = float(np.linalg.norm(r))
            tt1 = r_norm <= cfg.kappa1 * kkt_norm
            if cfg.tt2_form == "progress":
                # feasibility progress with only a loose leash on the rest of
                # the residual; enables the penalty update path
                tt2 = rc_norm <= cfg.eps * c_norm and r_norm <= kappa2 * c_norm
            else:
                tt2 = rc_norm <= cfg.eps * min(c_norm, rc_norm + cfg.tau * c_norm)
            if tt1 or tt2 or stepper.exhausted:
                break

        dx = dz[: z.n]
        delta_m, q_curv, red, rhs_scale = _model_reduction(
            ev.grad_f, B, ev.c, ev.jac, dx, pi, sigma, fl
        )
        slope = red - sigma * rhs_scale
        need_bump = tt2 and not _mrc_holds(delta_m, q_curv, pi, sigma, rhs_scale)
        # the line search also needs a positive model decrease outright
        if (need_bump or delta_m <= 0.0) and slope > 0.0:
            # smallest penalty satisfying the model reduction condition
            pi_trial = (max(q_curv, 0.0) + float(ev.grad_f @ dx) + q_curv) / slope
            pi = max(pi, pi_trial + 1e-4)
            delta_m = -float(ev.grad_f @ dx) - q_curv + pi * red

        phi0 = ev.f + pi * float(np.sum(np.abs(ev.c)))
        try:
            alpha = _l1_backtrack(problem, z, dz, pi, delta_m, phi0, cfg.eta, cfg.alpha_min, fl)
        except LineSearchError:
            status = Status.LINE_SEARCH_FAIL
            break
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        z = Iterate.from_stacked(z.stacked() + alpha * dz, z.n, z.m)
        records.append(
            IterationRecord(k, kkt_norm, alpha, stepper.j, 1, pi, cfg.kappa1, float("nan"), fl.count)
        )
        history.append(z.stacked())
        k += 1

    oc, gj, he = problem.counters.snapshot()
    return SolveReport(status, records, z, oc, gj, he, fl.count, history)


def solve_byrd_adaptive(
    problem: ProblemOracle, z0: Iterate, cfg: ByrdAdaptiveConfig | None = None
) -> SolveReport:
    """Adaptive variant: the GMRES gate kappa_k and the penalty move together
    whenever the model reduction condition fails, and both carry across
    iterations."""
    cfg = cfg or ByrdAdaptiveConfig()
    fl = FlopCounter()
    z = Iterate(z0.x.copy(), z0.lam.copy())
    pi = cfg.pi0
    kappa_k = cfg.kappa0
    sigma = cfg.sigma
    problem = tallied_view(problem)
    records: list[IterationRecord] = []
    history = [z.stacked()]
    status = Status.MAX_ITER

    k = 0
    while True:
        try:
            ev = evaluate(problem, z, _ALL, fl)
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        grad_x_lag = ev.grad_f + matvec(ev.jac.T, z.lam, fl)
        grad_l = np.concatenate([grad_x_lag, ev.c])
        kkt_norm = float(np.linalg.norm(grad_l))
        kkt_norm_l1 = float(np.sum(np.abs(grad_l)))
        if kkt_norm <= cfg.kkt_tol:
            records.append(IterationRecord(k, kkt_norm, None, 0, 0, pi, kappa_k, float("nan"), fl.count))
            status = Status.CONVERGED
            break
        if k >= cfg.max_outer:
            break

        B = modify_hessian(ev.hess_lagrangian, ev.jac, cfg.xi_B, fl)
        sys = assemble_from_parts(B, ev.jac, grad_x_lag, ev.c, ev.hess_lagrangian, cfg.xi_B, fl)
        stepper = _GmresStepper(sys.Gamma, -sys.rhs, fl)
        dz = np.zeros(z.n + z.m)
        rounds = 0
        delta_m = 0.0
        while True:
            rounds += 1
            while not stepper.exhausted:
                r = sys.Gamma @ dz + sys.rhs
                fl.add(sys.Gamma.size)
                if float(np.sum(np.abs(r))) <= kappa_k * kkt_norm_l1:
                    break
                dz = stepper.step()
            dx = dz[: z.n]
            delta_m, q_curv, red, rhs_scale = _model_reduction(
                ev.grad_f, B, ev.c, ev.jac, dx, pi, sigma, fl
            )
            if not _mrc_holds(delta_m, q_curv, pi, sigma, rhs_scale):
                pi *= cfg.nu
                if not stepper.exhausted:
                    kappa_k /= cfg.nu**2
                    continue
                if red - sigma * rhs_scale > 0.0:
                    continue  # penalty growth alone will satisfy the condition
            tt1 = float(np.linalg.norm(sys.Gamma @ dz + sys.rhs)) <= cfg.kappa1 * kkt_norm
            fl.add(sys.Gamma.size)
            if tt1 or stepper.exhausted:
                break
            dz = stepper.step()  # force progress before re-testing

        delta_m = -float(ev.grad_f @ dz[: z.n]) - 0.5 * float(
            dz[: z.n] @ (B @ dz[: z.n])
        ) + pi * (float(np.sum(np.abs(ev.c))) - float(np.sum(np.abs(ev.c + ev.jac @ dz[: z.n]))))
        phi0 = ev.f + pi * float(np.sum(np.abs(ev.c)))
        try:
            alpha = _l1_backtrack(problem, z, dz, pi, delta_m, phi0, cfg.eta, cfg.alpha_min, fl)
        except LineSearchError:
            status = Status.LINE_SEARCH_FAIL
            break
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        z = Iterate.from_stacked(z.stacked() + alpha * dz, z.n, z.m)
        records.append(
            IterationRecord(k, kkt_norm, alpha, stepper.j, rounds, pi, kappa_k, float("nan"), fl.count)
        )
        history.append(z.stacked())
        k += 1

    oc, gj, he = problem.counters.snapshot()
    return SolveReport(status, records, z, oc, gj, he, fl.count, history)


def solve_auglag(problem: ProblemOracle, z0: Iterate, cfg: AuglagConfig | None = None) -> SolveReport:
    """Augmented Lagrangian outer loop with an inexact Newton subsolver.

    Each outer iteration minimizes L(x, lam) + (mu/2)||c(x)||^2 over x to
    tolerance tau via Newton steps solved by GMRES with forcing term kappa,
    then updates the multipliers by lam += mu c and tightens (mu, tau).
    """
    cfg = cfg or AuglagConfig()
    fl = FlopCounter()
    z = Iterate(z0.x.copy(), z0.lam.copy())
    mu, tau = cfg.mu0, cfg.tau0
    problem = tallied_view(problem)
    records: list[IterationRecord] = []
    history = [z.stacked()]
    status = Status.MAX_ITER

    k = 0
    while True:
        try:
            ev = evaluate(problem, z, {Request.C, Request.GRAD, Request.JAC}, fl)
        except EvalFailure:
            status = Status.EVAL_FAIL
            break
        grad_x_lag = ev.grad_f + matvec(ev.jac.T, z.lam, fl)
        kkt_norm = float(np.linalg.norm(np.concatenate([grad_x_lag, ev.c])))
        if kkt_norm <= cfg.kkt_tol:
            records.append(IterationRecord(k, kkt_norm, None, 0, 0, mu, tau, float("nan"), fl.count))
            status = Status.CONVERGED
            break
        if k >= cfg.max_outer:
            break

        xs = z.x.copy()
        subiters = 0
        alpha = None
        failed = None
        c_latest = ev.c
        while True:
            try:
                sev = evaluate(
                    problem, Iterate(xs, z.lam), {Request.F, Request.C, Request.GRAD, Request.JAC}, fl
                )
            except EvalFailure:
                failed = Status.EVAL_FAIL
                break
            c_latest = sev.c
            shifted = z.lam + mu * sev.c
            grad_mu = sev.grad_f + matvec(sev.jac.T, shifted, fl)
            if float(np.linalg.norm(grad_mu)) <= tau:
                break
            if subiters >= cfg.max_subiters:
                failed = Status.INNER_BUDGET
                break
            try:
                hev = evaluate(problem, Iterate(xs, shifted), {Request.HESS}, fl)
            except EvalFailure:
                failed = Status.EVAL_FAIL
                break
            H_mu = hev.hess_lagrangian + mu * matvec(sev.jac.T, sev.jac, fl)
            if sym_eigvals(H_mu, fl)[0] <= 1e-10:
                H_mu = H_mu + (cfg.xi_B + spectral_norm(H_mu, fl)) * np.eye(z.n)
            try:
                dx = gmres(H_mu, -grad_mu, cfg.kappa, fl=fl)
            except GmresError as exc:
                dx = exc.x
            dir_deriv = dot(grad_mu, dx, fl)
            if dir_deriv >= 0.0:
                dx = -grad_mu
                dir_deriv = -dot(grad_mu, grad_mu, fl)

            def phi_mu(x: np.ndarray) -> float:
                pev = evaluate(problem, Iterate(x, z.lam), {Request.F, Request.C}, fl)
                return pev.f + dot(z.lam, pev.c, fl) + 0.5 * mu * dot(pev.c, pev.c, fl)

            phi0 = sev.f + dot(z.lam, sev.c, fl) + 0.5 * mu * dot(sev.c, sev.c, fl)
            try:
                a = 1.0
                while True:
                    if phi_mu(xs + a * dx) <= phi0 + cfg.eta * a * dir_deriv:
                        break
                    a *= 0.5
                    if a < cfg.alpha_min:
                        raise LineSearchError("augmented Lagrangian subproblem line search failed")
            except LineSearchError:
                failed = Status.LINE_SEARCH_FAIL
                break
            except EvalFailure:
                failed = Status.EVAL_FAIL
                break
            xs = xs + a * dx
            alpha = a
            subiters += 1
        if failed is not None:
            status = failed
            break

        lam_new = z.lam + mu * c_latest
        z = Iterate(xs, lam_new)
        records.append(
            IterationRecord(k, kkt_norm, alpha, subiters, 1, mu, tau, float("nan"), fl.count)
        )
        history.append(z.stacked())
        mu *= cfg.nu_mu
        tau *= cfg.nu_tau
        k += 1

    oc, gj, he = problem.counters.snapshot()
    return SolveReport(status, records, z, oc, gj, he, fl.count, history)
