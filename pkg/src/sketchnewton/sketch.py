"""Randomized sketch-and-project inner solver for the Newton system.

Each step projects the current direction onto the solution set of a one-
dimensional random sketch of the system (Gaussian vector or randomized
Kaczmarz).  The loop stops at the first iterate whose maintained residual
satisfies the adaptive accuracy threshold

    ||r|| <= theta * delta * ||grad L|| / (gamma_norm_bound * Psi).

Steps are executed in batches of RECOMPUTE_PERIOD: the batch reduces the
coefficient recursion to one triangular solve, reproduces the step-by-step
iteration exactly (same sketches, same first-passage stopping), and ends
with a full residual recomputation that bounds drift.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .flops import FlopCounter
from .kkt import KKTSystem

# Full residual recomputation period; also the batch size.
RECOMPUTE_PERIOD = 200

DEGENERATE_REL = 1e-14


class SketchKind(enum.Enum):
    GAUSSIAN_VECTOR = "gaussian_vector"
    RANDOMIZED_KACZMARZ = "randomized_kaczmarz"


@dataclass(frozen=True)
class SketchDistribution:
    """One-dimensional sketch family: dense Gaussian or canonical basis."""

    kind: SketchKind
    d: int = 1

    def __post_init__(self) -> None:
        if self.d != 1:
            raise ValueError("only sketch dimension d = 1 is supported")


GAUSSIAN_VECTOR = SketchDistribution(SketchKind.GAUSSIAN_VECTOR)
RANDOMIZED_KACZMARZ = SketchDistribution(SketchKind.RANDOMIZED_KACZMARZ)


@dataclass
class InnerState:
    """Resumable inner-solver state; owns its random stream."""

    dz: np.ndarray
    r: np.ndarray
    rng: np.random.Generator
    j: int = 0


class InnerBudgetError(Exception):
    """Inner iteration cap exceeded; carries the best state reached."""

    def __init__(self, state: InnerState, cap: int):
        self.state = state
        self.cap = cap
        super().__init__(f"inner loop exceeded {cap} iterations (residual {np.linalg.norm(state.r):.3e})")


def fresh_state(sys: KKTSystem, rng: np.random.Generator) -> InnerState:
    """Zero direction with residual equal to the right-hand side."""
    dim = sys.rhs.size
    return InnerState(dz=np.zeros(dim), r=sys.rhs.copy(), rng=rng)


def draw_sketch(dist: SketchDistribution, dim: int, rng: np.random.Generator) -> np.ndarray:
    """One fresh sketch vector."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dist.kind is SketchKind.GAUSSIAN_VECTOR:
        return rng.standard_normal(dim)
    s = np.zeros(dim)
    s[int(rng.integers(0, dim))] = 1.0
    return s


def accuracy_threshold(sys: KKTSystem, theta: float, delta: float) -> float:
    """Right-hand side of the adaptive accuracy condition."""
    return theta * delta * float(np.linalg.norm(sys.rhs)) / (sys.gamma_norm_bound * sys.Psi)


def project_step(Gamma: np.ndarray, state: InnerState, s: np.ndarray, fl: FlopCounter | None = None) -> InnerState:
    """One sketch-and-project update; the d=1 pseudoinverse is a reciprocal.

    Degenerate sketches (Gamma @ s numerically zero) advance the counter but
    leave the state unchanged.
    """
    w = Gamma @ s
    denom = float(w @ w)
    if fl is not None:
        dim = s.size
        fl.add(2 * dim * dim + 6 * dim)
    state.j += 1
    if denom <= DEGENERATE_REL * float(s @ s) * float(np.sum(Gamma * Gamma)):
        return state
    q = float(s @ state.r)
    coef = q / denom
    state.dz = state.dz - coef * w
    state.r = state.r - coef * (Gamma @ w)
    return state


def run_inner_loop(
    sys: KKTSystem,
    state: InnerState,
    theta: float,
    delta: float,
    cap: int,
    dist: SketchDistribution,
    fl: FlopCounter | None = None,
) -> InnerState:
    """Iterate until the accuracy condition holds; resumable across calls.

    Raises InnerBudgetError once state.j reaches cap without acceptance.  A
    zero right-hand side returns immediately (the outer solver has converged
    and the threshold would be zero).
    """
    if not (0.0 < theta <= 1.0):
        raise ValueError("theta must lie in (0, 1]")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    grad_norm = float(np.linalg.norm(sys.rhs))
    if grad_norm == 0.0:
        return state
    thresh = accuracy_threshold(sys, theta, delta)
    rnorm = float(np.linalg.norm(state.r))
    while rnorm > thresh:
        if state.j >= cap:
            raise InnerBudgetError(state, cap)
        batch = min(RECOMPUTE_PERIOD, cap - state.j)
        _run_batch(sys, state, batch, thresh, dist, fl)
        rnorm = float(np.linalg.norm(state.r))
    return state


def _run_batch(
    sys: KKTSystem,
    state: InnerState,
    batch: int,
    thresh: float,
    dist: SketchDistribution,
    fl: FlopCounter | None,
) -> None:
    """Apply up to `batch` projection steps, stopping at first acceptance.

    With h_t = Gamma^2 s_t and coef_t = (s_t . r_t) / ||Gamma s_t||^2, the
    running residual satisfies r_t = r_0 - sum_{s<t} coef_s h_s, so the
    coefficients solve one lower-triangular system and the whole trajectory
    of residual norms is recovered from a cumulative sum.  The state after
    the batch matches the sequential iteration exactly; the residual is then
    recomputed from scratch.
    """
    Gamma = sys.Gamma
    dim = Gamma.shape[0]
    G2 = sys.gamma_squared()
    kaczmarz = dist.kind is SketchKind.RANDOMIZED_KACZMARZ
    if kaczmarz:
        idx = state.rng.integers(0, dim, size=batch)
        W = Gamma[:, idx]
        H2S = G2[:, idx]
        M = G2[np.ix_(idx, idx)]
        sketch_sq = np.ones(batch)
        srhs = state.r[idx].copy()
    else:
        S = state.rng.standard_normal((batch, dim)).T
        W = Gamma @ S
        H2S = Gamma @ W
        M = W.T @ W
        sketch_sq = np.einsum("ij,ij->j", S, S)
        srhs = S.T @ state.r

    diag = np.diagonal(M).copy()
    degenerate = diag <= DEGENERATE_REL * sketch_sq * sys.gamma_norm_bound**2
    L = np.tril(M)
    if degenerate.any():
        L[degenerate, :] = 0.0
        L[:, degenerate] = 0.0
        np.fill_diagonal(L, np.where(degenerate, 1.0, diag))
        srhs = np.where(degenerate, 0.0, srhs)
    coef = solve_triangular(L, srhs, lower=True, check_finite=False)

    trail = np.cumsum(H2S * coef[None, :], axis=1)
    norms = np.linalg.norm(state.r[:, None] - trail, axis=0)
    hits = norms <= thresh
    steps = int(np.argmax(hits)) + 1 if hits.any() else batch

    state.dz = state.dz - W[:, :steps] @ coef[:steps]
    state.j += steps
    state.r = Gamma @ state.dz + sys.rhs
    if fl is not None:
        per_step = (dim * dim + 5 * dim) if kaczmarz else (2 * dim * dim + 6 * dim)
        fl.add(steps * per_step)
