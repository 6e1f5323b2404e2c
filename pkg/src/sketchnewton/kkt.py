"""Assembly and direct service of the Lagrangian Newton system.

The saddle system is Gamma * dz = -(grad_x L, c) with Gamma built from a
modified Hessian B and the constraint Jacobian G.  Alongside the matrix we
compute the scalars that gate the randomized inner solver: the smallest
singular value of G, the conditioning bound Psi, the norm bound Upsilon, and
the accuracy budget delta_trial.  All matrix norms here are exact spectral
norms; the sizes are small enough that the SVDs are negligible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flops import FlopCounter, lu_solve, matvec, singular_values, spectral_norm, sym_eigvals
from .problems import Iterate, ProblemOracle, Request, evaluate

RANK_TOL = 1e-10
# Positive-curvature test threshold for the reduced Hessian; strictly above
# zero for floating-point robustness near the boundary.
EIG_TOL = 1e-10


class JacobianRankError(Exception):
    pass


@dataclass
class KKTSystem:
    """Newton system data plus the derived inner-solver scalars."""

    B: np.ndarray
    G: np.ndarray
    Gamma: np.ndarray
    rhs: np.ndarray
    gamma_norm_bound: float
    sigma1: float
    Psi: float
    Upsilon: float
    delta_trial: Optional[float] = None

    _gamma_sq: Optional[np.ndarray] = None

    def gamma_squared(self) -> np.ndarray:
        """Cached Gamma @ Gamma for the batched inner solver."""
        if self._gamma_sq is None:
            self._gamma_sq = self.Gamma @ self.Gamma
        return self._gamma_sq


def null_space_basis(G: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    """Orthonormal basis of null(G) for a full-row-rank m x n matrix."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    m, n = G.shape
    if m == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(G)
    if fl is not None:
        fl.add(2 * m * m * n + 2 * m**3 + n * n * n)
    if s[-1] <= RANK_TOL:
        raise JacobianRankError(f"Jacobian is rank deficient (sigma_min={s[-1]:.3e})")
    return Vt[m:].T.copy()


def modify_hessian(H: np.ndarray, G: np.ndarray, xi_B: float, fl: FlopCounter | None = None) -> np.ndarray:
    """Return B = H when the reduced Hessian Z'HZ is positive definite,
    otherwise shift: B = H + (xi_B + ||H||) I."""
    if xi_B <= 0:
        raise ValueError("xi_B must be positive")
    H = np.asarray(H, dtype=float)
    Z = null_space_basis(G, fl)
    if Z.shape[1] == 0:
        return H.copy()
    reduced = Z.T @ H @ Z
    if fl is not None:
        fl.add(Z.shape[0] * Z.shape[1] * (Z.shape[0] + Z.shape[1]))
    if sym_eigvals(0.5 * (reduced + reduced.T), fl)[0] > EIG_TOL:
        return H.copy()
    return H + (xi_B + spectral_norm(H, fl)) * np.eye(H.shape[0])


def assemble_from_parts(
    B: np.ndarray,
    G: np.ndarray,
    grad_x_lag: np.ndarray,
    c: np.ndarray,
    H: np.ndarray,
    xi_B: float,
    fl: FlopCounter | None = None,
) -> KKTSystem:
    """Assemble the saddle matrix and derived scalars from evaluated parts."""
    m, n = G.shape
    Gamma = np.zeros((n + m, n + m))
    Gamma[:n, :n] = B
    Gamma[:n, n:] = G.T
    Gamma[n:, :n] = G
    rhs = np.concatenate([grad_x_lag, c])
    sigma1 = float(singular_values(G, fl)[-1])
    if sigma1 <= RANK_TOL:
        raise JacobianRankError(f"Jacobian is rank deficient (sigma_min={sigma1:.3e})")
    norm_B = spectral_norm(B, fl)
    Psi = 20.0 * max(norm_B**2, 1.0) / (min(xi_B, 1.0) * min(sigma1**2, 1.0))
    Upsilon = max(spectral_norm(G, fl), spectral_norm(H, fl), 1.0)
    bound = spectral_norm(Gamma, fl)
    return KKTSystem(B, G, Gamma, rhs, bound, sigma1, Psi, Upsilon)


def assemble(
    problem: ProblemOracle,
    z: Iterate,
    xi_B: float,
    eta1: float | None = None,
    eta2: float | None = None,
    beta: float | None = None,
    fl: FlopCounter | None = None,
) -> KKTSystem:
    """Evaluate the oracle at z and assemble the Newton system.

    When penalty parameters are supplied the delta_trial field is filled from
    them; otherwise it is left None for the caller to compute.
    """
    ev = evaluate(problem, z, {Request.C, Request.GRAD, Request.JAC, Request.HESS}, fl)
    B = modify_hessian(ev.hess_lagrangian, ev.jac, xi_B, fl)
    grad_x_lag = ev.grad_f + matvec(ev.jac.T, z.lam, fl)
    sys = assemble_from_parts(B, ev.jac, grad_x_lag, ev.c, ev.hess_lagrangian, xi_B, fl)
    if eta1 is not None and eta2 is not None and beta is not None:
        sys.delta_trial = delta_trial(eta1, eta2, beta, sys.Upsilon, sys.Psi)
    return sys


def delta_trial(eta1: float, eta2: float, beta: float, Upsilon: float, Psi: float) -> float:
    """Accuracy budget (0.5 - beta) eta2 / ((1 + eta1 + eta2) Upsilon^2 Psi^2)."""
    if not (0.0 < beta < 0.5):
        raise ValueError("beta must lie in (0, 0.5)")
    if eta1 <= 0 or eta2 <= 0:
        raise ValueError("penalty parameters must be positive")
    return (0.5 - beta) * eta2 / ((1.0 + eta1 + eta2) * Upsilon**2 * Psi**2)


def residual(Gamma: np.ndarray, dz: np.ndarray, rhs: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    """Gamma @ dz + rhs."""
    return matvec(Gamma, dz, fl) + rhs


def exact_solve(Gamma: np.ndarray, rhs: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    """Direct solve of Gamma dz = -rhs with partial pivoting."""
    try:
        dz = lu_solve(Gamma, -rhs, fl)
    except np.linalg.LinAlgError as exc:
        raise JacobianRankError(f"singular KKT matrix: {exc}") from exc
    res = np.linalg.norm(Gamma @ dz + rhs)
    if not np.isfinite(res) or res > 1e-10 * (1.0 + np.linalg.norm(rhs)):
        raise JacobianRankError("KKT matrix too ill-conditioned for the direct solve contract")
    return dz
