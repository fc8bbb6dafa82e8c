"""Regularized linear solves and low-rank acceleration.

Dense solves of (G + eps*n*I) use a symmetric positive-definite factorization.
The low-rank path factors a PSD Gram matrix with greedy pivoted incomplete
Cholesky and answers shifted solves through the Woodbury identity in
O(n r^2 + r^3) instead of O(n^3).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _accel
from .exceptions import NotPSDError, SingularSystemError


def reg_solve(G, eps: float, n: int, B):
    """Solve (G + eps*n*I) X = B for a symmetric PSD matrix G."""
    return RegularizedSolver(G, eps, n).solve(B)


class RegularizedSolver:
    """Cached Cholesky factorization of (G + eps*n*I) for repeated solves."""

    def __init__(self, G, eps: float, n: int):
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("matrix must be square")
        if eps < 0:
            raise ValueError("regularizer must be nonnegative")
        shifted = G + (eps * n) * np.eye(G.shape[0])
        try:
            self._factor = scipy.linalg.cho_factor(shifted, lower=True)
        except scipy.linalg.LinAlgError as err:
            raise SingularSystemError("singular regularized system") from err

    def solve(self, B):
        B = np.asarray(B, dtype=float)
        return scipy.linalg.cho_solve(self._factor, B)


@dataclass
class LowRankFactor:
    """Pivoted low-rank factor L with L @ L.T approximating a PSD matrix.

    ``trace_history[j]`` is the residual trace after j pivots; it is
    non-increasing and ends at ``residual_trace``.
    """

    matrix: np.ndarray
    pivots: np.ndarray
    trace_history: np.ndarray

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]

    @property
    def residual_trace(self) -> float:
        return float(self.trace_history[-1])

    def pivot_block(self) -> np.ndarray:
        """Lower-triangular r x r block C = L[pivots] with C @ C.T = G[pivots][:, pivots]."""
        return self.matrix[self.pivots, :]


def icf(G, rank_cap: int = None, tol: float = 0.0) -> LowRankFactor:
    """Greedy pivoted incomplete Cholesky of a symmetric PSD matrix.

    Stops after ``rank_cap`` pivots or once the residual trace drops to
    ``tol``, whichever comes first.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    if rank_cap is None:
        rank_cap = n
    rank_cap = min(int(rank_cap), n)
    L, pivots, history, ok = _accel.icf_factor(G, rank_cap, float(tol))
    if not ok:
        raise NotPSDError("matrix not PSD")
    return LowRankFactor(np.ascontiguousarray(L), pivots, history)


def _flush_relative(arr):
    """Zero entries below TINY_FLOOR relative to the largest magnitude.

    A relative perturbation at the 1e-30 level is far below solve accuracy,
    and it keeps LU elimination intermediates out of the subnormal range
    (where the hardware is drastically slower).
    """
    scale = np.max(np.abs(arr)) if arr.size else 0.0
    if scale > 0.0:
        np.copyto(arr, 0.0, where=np.abs(arr) < _accel.TINY_FLOOR * scale)
    return arr


def lowrank_shift_solve(U, V, shift: float, B, inner_factor=None):
    """Solve (U @ V.T + shift*I) X = B via the Woodbury identity.

    ``inner_factor`` optionally carries a prefactored lu_factor of
    (shift*I_r + V.T @ U) so the r x r system is factored once across calls.
    """
    B = np.asarray(B, dtype=float)
    if shift <= 0:
        raise SingularSystemError("singular regularized system")
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    r = U.shape[1]
    if r == 0:
        return B / shift
    if inner_factor is None:
        inner_factor = lowrank_inner_factor(U, V, shift)
    VtB = _flush_relative(V.T @ B)
    return (B - U @ scipy.linalg.lu_solve(inner_factor, VtB)) / shift


def lowrank_inner_factor(U, V, shift: float):
    """LU factorization of the r x r Woodbury inner matrix shift*I + V.T @ U."""
    r = np.asarray(U).shape[1]
    inner = _flush_relative(shift * np.eye(r) + np.asarray(V).T @ np.asarray(U))
    try:
        return scipy.linalg.lu_factor(inner)
    except scipy.linalg.LinAlgError as err:
        raise SingularSystemError("singular regularized system") from err


def woodbury_solve(factor, eps: float, n: int, B):
    """Solve (L @ L.T + eps*n*I) X = B using a LowRankFactor (or raw L matrix)."""
    L = factor.matrix if isinstance(factor, LowRankFactor) else np.asarray(factor)
    return lowrank_shift_solve(L, L, eps * n, B)


class LowRankRegularizedSolver:
    """Woodbury-backed analogue of RegularizedSolver for G ~ L @ L.T."""

    def __init__(self, L, eps: float, n: int):
        self._L = np.asarray(L, dtype=float)
        self._shift = eps * n
        if self._shift <= 0:
            raise SingularSystemError("singular regularized system")
        if self._L.shape[1] > 0:
            self._inner = lowrank_inner_factor(self._L, self._L, self._shift)
        else:
            self._inner = None

    def solve(self, B):
        return lowrank_shift_solve(self._L, self._L, self._shift, B, self._inner)
