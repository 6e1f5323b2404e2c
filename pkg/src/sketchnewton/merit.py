"""Exact augmented Lagrangian merit machinery.

The merit function adds a feasibility penalty (eta1/2)||c||^2 and an
optimality penalty (eta2/2)||grad_x L||^2 to the Lagrangian.  It never
shapes the search direction; it only accepts or rejects steps through an
Armijo backtracking line search, and its penalty parameters are adapted by
update_penalty whenever the descent condition fails.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .flops import FlopCounter, dot, matvec
from .problems import Iterate, ProblemOracle, Request, evaluate

BACKTRACK_FACTOR = 0.5
DEFAULT_ALPHA_MIN = 1e-12


class LineSearchError(Exception):
    """No acceptable stepsize above alpha_min; merit and gradient disagree."""


@dataclass(frozen=True)
class PenaltyState:
    """Merit parameters (eta1, eta2, delta) plus the update factors."""

    eta1: float
    eta2: float
    delta: float
    nu: float
    beta: float

    def __post_init__(self) -> None:
        if self.eta1 <= 0 or self.eta2 <= 0:
            raise ValueError("eta1 and eta2 must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.nu <= 1.0:
            raise ValueError("nu must exceed 1")
        if not (0.0 < self.beta < 0.5):
            raise ValueError("beta must lie in (0, 0.5)")


def merit_value_from_parts(
    f: float,
    c: np.ndarray,
    grad_f: np.ndarray,
    jac: np.ndarray,
    lam: np.ndarray,
    eta1: float,
    eta2: float,
    fl: FlopCounter | None = None,
) -> float:
    grad_x_lag = grad_f + matvec(jac.T, lam, fl)
    lagrangian = f + dot(lam, c, fl)
    return lagrangian + 0.5 * eta1 * dot(c, c, fl) + 0.5 * eta2 * dot(grad_x_lag, grad_x_lag, fl)


def merit_value(
    problem: ProblemOracle,
    z: Iterate,
    eta1: float,
    eta2: float,
    fl: FlopCounter | None = None,
) -> float:
    """Merit value at z; one objective/constraints and one gradient/Jacobian
    evaluation (the optimality penalty needs grad f and the Jacobian)."""
    ev = evaluate(problem, z, {Request.F, Request.C, Request.GRAD, Request.JAC}, fl)
    return merit_value_from_parts(ev.f, ev.c, ev.grad_f, ev.jac, z.lam, eta1, eta2, fl)


def merit_gradient_from_parts(
    c: np.ndarray,
    grad_f: np.ndarray,
    jac: np.ndarray,
    hess: np.ndarray,
    lam: np.ndarray,
    eta1: float,
    eta2: float,
    fl: FlopCounter | None = None,
) -> np.ndarray:
    grad_x_lag = grad_f + matvec(jac.T, lam, fl)
    gx = grad_x_lag + eta2 * matvec(hess, grad_x_lag, fl) + eta1 * matvec(jac.T, c, fl)
    gl = c + eta2 * matvec(jac, grad_x_lag, fl)
    return np.concatenate([gx, gl])


def merit_gradient(
    problem: ProblemOracle,
    z: Iterate,
    eta1: float,
    eta2: float,
    fl: FlopCounter | None = None,
) -> np.ndarray:
    """Analytic merit gradient, stacked as (x-block, lambda-block)."""
    ev = evaluate(problem, z, {Request.C, Request.GRAD, Request.JAC, Request.HESS}, fl)
    return merit_gradient_from_parts(
        ev.c, ev.grad_f, ev.jac, ev.hess_lagrangian, z.lam, eta1, eta2, fl
    )


def descent_ok(merit_grad: np.ndarray, dz: np.ndarray, eta2: float, kkt_norm: float) -> bool:
    """Directional derivative at most -eta2 * ||grad L||^2 / 2."""
    return float(merit_grad @ dz) <= -0.5 * eta2 * kkt_norm**2


def update_penalty(p: PenaltyState, delta_trial_fn: Callable[[float, float], float]) -> PenaltyState:
    """Grow eta1 by nu^2, shrink eta2 by nu, cut delta by nu^4 capped at the
    recomputed trial budget for the new parameters."""
    eta1 = p.eta1 * p.nu**2
    eta2 = p.eta2 / p.nu
    trial = delta_trial_fn(eta1, eta2)
    delta = min(p.delta / p.nu**4, trial)
    return replace(p, eta1=eta1, eta2=eta2, delta=delta)


def armijo_backtrack(
    problem: ProblemOracle,
    z: Iterate,
    dz: np.ndarray,
    p: PenaltyState,
    dir_deriv: float,
    alpha_min: float = DEFAULT_ALPHA_MIN,
    fl: FlopCounter | None = None,
) -> float:
    """Backtrack from alpha = 1 until the Armijo condition holds.

    dir_deriv is the merit directional derivative at z (alpha independent,
    computed once by the caller).  Raises LineSearchError below alpha_min.
    """
    phi0 = merit_value(problem, z, p.eta1, p.eta2, fl)

    def phi(alpha: float) -> float:
        trial = Iterate.from_stacked(z.stacked() + alpha * dz, z.n, z.m)
        return merit_value(problem, trial, p.eta1, p.eta2, fl)

    alpha, _ = armijo_core(phi, phi0, dir_deriv, p.beta, alpha_min)
    return alpha


def armijo_core(
    phi: Callable[[float], float],
    phi0: float,
    dir_deriv: float,
    beta: float,
    alpha_min: float = DEFAULT_ALPHA_MIN,
) -> tuple[float, float]:
    """Shared backtracking loop; returns (alpha, phi(alpha))."""
    if dir_deriv >= 0.0:
        raise LineSearchError(f"directional derivative {dir_deriv:.3e} is not negative")
    alpha = 1.0
    while True:
        value = phi(alpha)
        if value <= phi0 + alpha * beta * dir_deriv:
            return alpha, value
        alpha *= BACKTRACK_FACTOR
        if alpha < alpha_min:
            raise LineSearchError(
                f"no stepsize above {alpha_min:.1e} satisfies the Armijo condition"
            )
