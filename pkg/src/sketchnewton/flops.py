"""Flop accounting at the linear-algebra kernel level.

One fused multiply-add counts as one flop.  Dense decompositions are charged
with the usual leading-order costs (documented per kernel) so that solver
comparisons are implementation independent: a batched execution of an
iteration is charged the same as a step-by-step one.
"""

from __future__ import annotations

import numpy as np


class FlopCounter:
    """Mutable flop tally owned by a single solve."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def matvec(A: np.ndarray, x: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    if fl is not None:
        fl.add(A.shape[0] * A.shape[1])
    return A @ x


def matmul(A: np.ndarray, B: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    if fl is not None:
        fl.add(A.shape[0] * A.shape[1] * B.shape[1])
    return A @ B


def dot(a: np.ndarray, b: np.ndarray, fl: FlopCounter | None = None) -> float:
    if fl is not None:
        fl.add(a.size)
    return float(a @ b)


def axpy(alpha: float, x: np.ndarray, y: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    """y + alpha*x, charged one multiply-add per element."""
    if fl is not None:
        fl.add(x.size)
    return y + alpha * x


def vnorm(x: np.ndarray, fl: FlopCounter | None = None) -> float:
    if fl is not None:
        fl.add(x.size)
    return float(np.linalg.norm(x))


def lu_solve(A: np.ndarray, b: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    """Dense solve with partial pivoting, charged n^3/3 + n^2."""
    n = A.shape[0]
    if fl is not None:
        fl.add(n**3 // 3 + n**2)
    return np.linalg.solve(A, b)


def spectral_norm(A: np.ndarray, fl: FlopCounter | None = None) -> float:
    """Largest singular value; charged as a full SVD."""
    if fl is not None:
        _charge_svd(A, fl)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def singular_values(A: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    if fl is not None:
        _charge_svd(A, fl)
    return np.linalg.svd(A, compute_uv=False)


def sym_eigvals(A: np.ndarray, fl: FlopCounter | None = None) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, charged 4n^3/3."""
    n = A.shape[0]
    if fl is not None:
        fl.add(4 * n**3 // 3)
    return np.linalg.eigvalsh(A)


def _charge_svd(A: np.ndarray, fl: FlopCounter) -> None:
    m, n = A.shape
    lo, hi = min(m, n), max(m, n)
    fl.add(2 * lo * lo * hi + 2 * lo**3)
