"""Problem oracles for equality-constrained minimization.

A problem is a bundle of callbacks for the objective f, its gradient, the
constraint map c, its Jacobian, and the Hessian of the Lagrangian, together
with evaluation counters.  Built-in instances: an equality-constrained QP,
constrained logistic regression, and a discretized optimal control problem.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .flops import FlopCounter, dot, matvec, singular_values


class Request(enum.Enum):
    """Fields an oracle evaluation can be asked for."""

    F = "f"
    C = "c"
    GRAD = "grad"
    JAC = "jac"
    HESS = "hess"


class EvalFailure(Exception):
    """An oracle produced a non-finite value.

    Carries the offending field so callers can report it.
    """

    def __init__(self, field_name: str, problem: str = ""):
        self.field = field_name
        super().__init__(f"non-finite {field_name} evaluation" + (f" in {problem}" if problem else ""))


class LibsvmParseError(Exception):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class Iterate:
    """Primal-dual point (x, lambda)."""

    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        n, m = self.x.size, self.lam.size
        if n < 1 or m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if m > n:
            raise ValueError(f"m={m} duals exceed n={n} primals; Jacobian cannot have full row rank")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.lam.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam])

    @staticmethod
    def from_stacked(v: np.ndarray, n: int, m: int) -> "Iterate":
        v = np.asarray(v, dtype=float)
        if v.size != n + m:
            raise ValueError("stacked vector has wrong length")
        return Iterate(v[:n].copy(), v[n:].copy())


@dataclass
class EvalBundle:
    """Requested oracle outputs; unrequested fields stay None."""

    f: Optional[float] = None
    grad_f: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    jac: Optional[np.ndarray] = None
    hess_lagrangian: Optional[np.ndarray] = None


class EvalCounters:
    """Joint evaluation tallies with thread-safe increments.

    One call that asks for f and c together counts as a single objective-and-
    constraints evaluation; gradient and Jacobian are tallied jointly the same
    way.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.obj_cons_evals = 0
        self.grad_jac_evals = 0
        self.hess_evals = 0

    def bump(self, obj_cons: bool, grad_jac: bool, hess: bool) -> None:
        with self._lock:
            if obj_cons:
                self.obj_cons_evals += 1
            if grad_jac:
                self.grad_jac_evals += 1
            if hess:
                self.hess_evals += 1

    def snapshot(self) -> tuple[int, int, int]:
        with self._lock:
            return (self.obj_cons_evals, self.grad_jac_evals, self.hess_evals)


@dataclass
class Dataset:
    """Binary classification data: labels in {-1, +1} and sparse feature rows.

    Feature indices are 0-based internally; the text format is 1-based.
    """

    labels: np.ndarray
    rows: list[dict[int, float]]
    n: int

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=float)
        if self.labels.size != len(self.rows):
            raise ValueError("labels and rows disagree in length")
        if self.labels.size and not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be +-1")
        for row in self.rows:
            for idx in row:
                if not (0 <= idx < max(self.n, 1)):
                    raise ValueError(f"feature index {idx} out of range for n={self.n}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def to_dense(self) -> np.ndarray:
        X = np.zeros((len(self.rows), self.n))
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                X[i, j] = v
        return X


@dataclass
class ProblemOracle:
    """Immutable problem definition plus mutable evaluation counters."""

    name: str
    n: int
    m: int
    objective: Callable[[np.ndarray, Optional[FlopCounter]], float]
    gradient: Callable[[np.ndarray, Optional[FlopCounter]], np.ndarray]
    constraints: Callable[[np.ndarray, Optional[FlopCounter]], np.ndarray]
    jacobian: Callable[[np.ndarray, Optional[FlopCounter]], np.ndarray]
    hessian: Callable[[np.ndarray, np.ndarray, Optional[FlopCounter]], np.ndarray]
    counters: EvalCounters = field(default_factory=EvalCounters)


class _ForwardingCounters(EvalCounters):
    """Local tally that also feeds the shared oracle counters."""

    def __init__(self, parent: EvalCounters):
        super().__init__()
        self._parent = parent

    def bump(self, obj_cons: bool, grad_jac: bool, hess: bool) -> None:
        super().bump(obj_cons, grad_jac, hess)
        self._parent.bump(obj_cons, grad_jac, hess)


def tallied_view(problem: ProblemOracle) -> ProblemOracle:
    """A view of the oracle whose counters tally this consumer's calls only,
    while still incrementing the shared counters.  Lets concurrent solves on
    one oracle report exact per-solve evaluation counts."""
    return replace(problem, counters=_ForwardingCounters(problem.counters))


def evaluate(
    problem: ProblemOracle,
    z: Iterate,
    request: set[Request],
    fl: FlopCounter | None = None,
) -> EvalBundle:
    """Evaluate the requested oracle fields at z, updating counters.

    Raises ValueError on dimension mismatch and EvalFailure when any
    requested field comes back non-finite.
    """
    request = set(request)
    if not request:
        raise ValueError("empty evaluation request")
    if z.n != problem.n or z.m != problem.m:
        raise ValueError(
            f"iterate dims ({z.n},{z.m}) do not match problem ({problem.n},{problem.m})"
        )
    problem.counters.bump(
        obj_cons=bool(request & {Request.F, Request.C}),
        grad_jac=bool(request & {Request.GRAD, Request.JAC}),
        hess=Request.HESS in request,
    )

    out = EvalBundle()
    if Request.F in request:
        out.f = float(problem.objective(z.x, fl))
        if not math.isfinite(out.f):
            raise EvalFailure("f", problem.name)
    if Request.C in request:
        out.c = np.asarray(problem.constraints(z.x, fl), dtype=float)
        _check_shape(out.c, (problem.m,), "c")
        _check_finite(out.c, "c", problem.name)
    if Request.GRAD in request:
        out.grad_f = np.asarray(problem.gradient(z.x, fl), dtype=float)
        _check_shape(out.grad_f, (problem.n,), "grad_f")
        _check_finite(out.grad_f, "grad_f", problem.name)
    if Request.JAC in request:
        out.jac = np.asarray(problem.jacobian(z.x, fl), dtype=float)
        _check_shape(out.jac, (problem.m, problem.n), "jac")
        _check_finite(out.jac, "jac", problem.name)
    if Request.HESS in request:
        H = np.asarray(problem.hessian(z.x, z.lam, fl), dtype=float)
        _check_shape(H, (problem.n, problem.n), "hess_lagrangian")
        _check_finite(H, "hess_lagrangian", problem.name)
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12:
            raise ValueError("hess_lagrangian is not symmetric")
        out.hess_lagrangian = H
    return out


def _check_shape(a: np.ndarray, shape: tuple, name: str) -> None:
    if a.shape != shape:
        raise ValueError(f"{name} has shape {a.shape}, expected {shape}")


def _check_finite(a: np.ndarray, name: str, problem: str) -> None:
    if not np.all(np.isfinite(a)):
        raise EvalFailure(name, problem)


def make_qp_problem(Q: np.ndarray, g: np.ndarray, A: np.ndarray, b: np.ndarray) -> ProblemOracle:
    """Quadratic objective 0.5 x'Qx + g'x with linear constraints Ax = b."""
    Q = np.asarray(Q, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = Q.shape[0]
    m = A.shape[0]
    if Q.shape != (n, n) or g.shape != (n,) or A.shape != (m, n) or b.shape != (m,):
        raise ValueError("inconsistent QP dimensions")
    if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
        raise ValueError("Q must be symmetric")
    if singular_values(A)[-1] <= 1e-10:
        raise ValueError("constraint matrix A is rank deficient")

    def objective(x, fl=None):
        return 0.5 * dot(x, matvec(Q, x, fl), fl) + dot(g, x, fl)

    def gradient(x, fl=None):
        return matvec(Q, x, fl) + g

    def constraints(x, fl=None):
        return matvec(A, x, fl) - b

    def jacobian(x, fl=None):
        return A.copy()

    def hessian(x, lam, fl=None):
        return Q.copy()

    return ProblemOracle("qp", n, m, objective, gradient, constraints, jacobian, hessian)


def make_logreg_problem(data: Dataset, m_lin: int, seed: int) -> ProblemOracle:
    """Logistic loss with m_lin random linear constraints plus ||x||^2 = 1.

    The linear coefficients are standard normal draws from a generator seeded
    with `seed`, so instances are reproducible.
    """
    if data.n_rows == 0:
        raise ValueError("empty dataset")
    n = data.n
    m = m_lin + 1
    if m > n:
        raise ValueError(f"m_lin + 1 = {m} constraints exceed n = {n}")
    X = data.to_dense()
    y = data.labels
    N = data.n_rows
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m_lin, n))
    b = rng.standard_normal(m_lin)

    def margins(x, fl=None):
        return y * matvec(X, x, fl)

    def objective(x, fl=None):
        t = margins(x, fl)
        # log(1 + exp(-t)) evaluated stably
        if fl is not None:
            fl.add(4 * N)
        return float(np.mean(np.logaddexp(0.0, -t)))

    def gradient(x, fl=None):
        t = margins(x, fl)
        w = expit(-t) * y
        if fl is not None:
            fl.add(2 * N)
        return -matvec(X.T, w, fl) / N

    def constraints(x, fl=None):
        lin = matvec(A, x, fl) - b if m_lin else np.zeros(0)
        if fl is not None:
            fl.add(n)
        return np.concatenate([lin, [dot(x, x, fl) - 1.0]])

    def jacobian(x, fl=None):
        return np.vstack([A, 2.0 * x]) if m_lin else (2.0 * x)[None, :]

    def hessian(x, lam, fl=None):
        t = margins(x, fl)
        s = expit(t) * expit(-t)
        if fl is not None:
            fl.add(2 * N + N * n * n)
        Hf = (X.T * s) @ X / N
        Hf = 0.5 * (Hf + Hf.T)
        # linear constraints are curvature-free; the sphere adds 2*lam_last*I
        return Hf + 2.0 * lam[-1] * np.eye(n)

    return ProblemOracle("logreg", n, m, objective, gradient, constraints, jacobian, hessian)


# Constraint rows of the control problem carry this fixed rescaling.  It
# keeps the smallest singular value of the Jacobian above one (so the
# inner-solver accuracy scalars stay well behaved in float64) while leaving
# the Newton-system spectrum comfortably away from the solver tolerance
# quantization boundaries.
PDE_CONSTRAINT_SCALE = 0.8


def make_pde_problem(N: int, zeta: float, eps_N: float, eps_S: float) -> ProblemOracle:
    """Discretized optimal control problem on the unit square.

    State x and control y live on the interior N x N grid with zero boundary
    values; the constraint couples them through the 5-point Laplacian stencil,
    and the objective tracks the reference surface u with an L2 control
    penalty weighted by zeta.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    nn = N * N

    idx = np.arange(1, N + 1)
    off = (eps_N / eps_S) * (idx - (N + 1) / 2.0)
    u = (np.sin(4.0 + off)[:, None] + np.cos(3.0 + off)[None, :]).ravel()

    S = 4.0 * np.eye(nn)
    for i in range(N):
        for j in range(N):
            k = i * N + j
            if i > 0:
                S[k, k - N] = -1.0
            if i < N - 1:
                S[k, k + N] = -1.0
            if j > 0:
                S[k, k - 1] = -1.0
            if j < N - 1:
                S[k, k + 1] = -1.0
    kc = PDE_CONSTRAINT_SCALE
    G = kc * np.hstack([S, -np.eye(nn)])
    H = np.diag(np.concatenate([np.ones(nn), zeta * np.ones(nn)]))

    def objective(v, fl=None):
        r = v[:nn] - u
        return 0.5 * dot(r, r, fl) + 0.5 * zeta * dot(v[nn:], v[nn:], fl)

    def gradient(v, fl=None):
        if fl is not None:
            fl.add(2 * nn)
        return np.concatenate([v[:nn] - u, zeta * v[nn:]])

    def constraints(v, fl=None):
        return kc * (matvec(S, v[:nn], fl) - v[nn:])

    def jacobian(v, fl=None):
        return G.copy()

    def hessian(v, lam, fl=None):
        return H.copy()

    prob = ProblemOracle("pde", 2 * nn, nn, objective, gradient, constraints, jacobian, hessian)
    prob.grid_size = N
    prob.reference = u
    return prob


def parse_libsvm(text) -> Dataset:
    """Parse "label idx:val idx:val ..." lines into a Dataset.

    Accepts str, bytes, or an iterable of lines.  Labels 0/1 are normalized
    to -1/+1; indices in the text are 1-based.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.decode("ascii") if isinstance(ln, bytes) else ln for ln in text]

    labels: list[float] = []
    rows: list[dict[int, float]] = []
    max_idx = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmParseError(lineno, f"non-numeric label {tokens[0]!r}") from None
        if label not in (-1.0, 0.0, 1.0):
            raise LibsvmParseError(lineno, f"label {label!r} not in {{-1, 0, 1}}")
        row: dict[int, float] = {}
        for tok in tokens[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"malformed feature token {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(lineno, f"feature index {idx} must be >= 1")
            row[idx - 1] = val
            max_idx = max(max_idx, idx)
        labels.append(1.0 if label > 0 else -1.0)
        rows.append(row)
    return Dataset(np.array(labels), rows, max_idx)


def serialize_libsvm(data: Dataset) -> str:
    """Inverse of parse_libsvm: 1-based indices, 17-significant-digit values."""
    lines = []
    for label, row in zip(data.labels, data.rows):
        parts = [f"{int(label):d}"]
        parts += [f"{idx + 1}:{val:.17g}" for idx, val in sorted(row.items())]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")
