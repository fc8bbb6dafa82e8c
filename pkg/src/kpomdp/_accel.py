"""Hot numeric kernels with numba-compiled and pure-numpy variants.

The compiled path is used by default when numba imports cleanly. Setting the
environment variable ``KPOMDP_NUMBA=0`` before import forces the numpy path
(useful for debugging and for the benchmark in ``benchmarks/``). Both variants
are exported so they can be compared directly.
"""

import os

import numpy as np
from scipy.spatial.distance import pdist

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("KPOMDP_NUMBA", "1") != "0"

# Numerical noise floor. Every quantity the package manipulates is O(1)
# scaled (kernel similarities and probability weights are at most 1), so
# magnitudes this small carry no usable information, but their products would
# land in the subnormal range where x86 arithmetic runs orders of magnitude
# slower. Flushing them to exact zero keeps every pairwise product of
# surviving values at least 1e-120, far from the subnormal boundary, while
# preserving the deep likelihood tails the belief updates lean on when an
# observation surprises the predictive weights.
TINY_FLOOR = 1e-60


def flush_tiny(arr):
    """Zero entries with |x| < TINY_FLOOR, in place; returns the array."""
    np.copyto(arr, 0.0, where=np.abs(arr) < TINY_FLOOR)
    return arr


# ---------------------------------------------------------------------------
# gaussian product-kernel Gram matrix


def gaussian_gram_numpy(rows, cols, bandwidths):
    """exp(-sum_d (x_d - y_d)^2 / (2 sigma_d^2)) for every row/col pair.

    Arithmetic mirrors the jitted variant exactly (reciprocal multiply,
    same accumulation order) so the two paths agree bit for bit.
    """
    expo = np.zeros((rows.shape[0], cols.shape[0]))
    for d in range(rows.shape[1]):
        diff = rows[:, d, None] - cols[None, :, d]
        inv = 1.0 / (2.0 * bandwidths[d] * bandwidths[d])
        expo += diff * diff * inv
    return np.exp(-expo)


@njit(cache=True)
def _gaussian_gram_numba(rows, cols, bandwidths):  # pragma: no cover - jitted
    n, m = rows.shape[0], cols.shape[0]
    ndim = rows.shape[1]
    inv = np.empty(ndim)
    for d in range(ndim):
        inv[d] = 1.0 / (2.0 * bandwidths[d] * bandwidths[d])
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            e = 0.0
            for d in range(ndim):
                diff = rows[i, d] - cols[j, d]
                e += diff * diff * inv[d]
            out[i, j] = np.exp(-e)
    return out


def gaussian_gram_numba(rows, cols, bandwidths):
    return _gaussian_gram_numba(
        np.ascontiguousarray(rows), np.ascontiguousarray(cols), np.asarray(bandwidths)
    )


# ---------------------------------------------------------------------------
# condensed pairwise Euclidean distances (for the median heuristic)


def pairwise_distances_numpy(points):
    """All n*(n-1)/2 pairwise distances, pair order (0,1), (0,2), ..."""
    return pdist(points)


@njit(cache=True)
def _pairwise_distances_numba(points):  # pragma: no cover - jitted
    n, ndim = points.shape
    out = np.empty(n * (n - 1) // 2)
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for d in range(ndim):
                diff = points[i, d] - points[j, d]
                s += diff * diff
            out[k] = np.sqrt(s)
            k += 1
    return out


def pairwise_distances_numba(points):
    return _pairwise_distances_numba(np.ascontiguousarray(points))


# ---------------------------------------------------------------------------
# incomplete Cholesky factorization (greedy pivoted)
#
# Returns (L, pivots, trace_history, psd_ok). trace_history[j] is the residual
# trace after j pivots. psd_ok flips to False when the most positive unused
# residual diagonal entry is negative beyond -1e-8 * max(trace(G), 1).


def icf_numpy(G, rank_cap, tol):
    n = G.shape[0]
    d = np.diag(G).astype(float).copy()
    used = np.zeros(n, dtype=bool)
    L = np.zeros((n, rank_cap))
    pivots = np.zeros(rank_cap, dtype=np.int64)
    history = np.zeros(rank_cap + 1)
    history[0] = d.sum()
    neg_tol = -1e-8 * max(history[0], 1.0)
    j = 0
    while j < rank_cap and history[j] > tol:
        masked = np.where(used, -np.inf, d)
        p = int(np.argmax(masked))
        if d[p] <= 0.0:
            break
        pivots[j] = p
        used[p] = True
        col = G[:, p] - L[:, :j] @ L[p, :j]
        L[:, j] = col / np.sqrt(d[p])
        d -= L[:, j] ** 2
        j += 1
        remaining = d[~used]
        if remaining.size and remaining.min() < neg_tol:
            return L[:, :j], pivots[:j], history[: j + 1], False
        history[j] = max(remaining.sum(), 0.0) if remaining.size else 0.0
    return L[:, :j], pivots[:j], history[: j + 1], True


@njit(cache=True)
def _icf_numba(G, rank_cap, tol):  # pragma: no cover - jitted
    n = G.shape[0]
    d = np.empty(n)
    for i in range(n):
        d[i] = G[i, i]
    used = np.zeros(n, dtype=np.bool_)
    L = np.zeros((n, rank_cap))
    pivots = np.zeros(rank_cap, dtype=np.int64)
    history = np.zeros(rank_cap + 1)
    history[0] = d.sum()
    neg_tol = -1e-8 * max(history[0], 1.0)
    j = 0
    ok = True
    while j < rank_cap and history[j] > tol:
        p = -1
        best = -np.inf
        for i in range(n):
            if not used[i] and d[i] > best:
                best = d[i]
                p = i
        if p < 0 or d[p] <= 0.0:
            break
        pivots[j] = p
        used[p] = True
        piv = np.sqrt(d[p])
        for i in range(n):
            s = G[i, p]
            for k in range(j):
                s -= L[i, k] * L[p, k]
            L[i, j] = s / piv
        for i in range(n):
            d[i] -= L[i, j] * L[i, j]
        j += 1
        rem = 0.0
        worst = 0.0
        for i in range(n):
            if not used[i]:
                rem += d[i]
                if d[i] < worst:
                    worst = d[i]
        if worst < neg_tol:
            ok = False
            break
        if rem < 0.0:
            rem = 0.0
        history[j] = rem
    return L[:, :j], pivots[:j], history[: j + 1], ok


def icf_numba(G, rank_cap, tol):
    return _icf_numba(np.ascontiguousarray(G), int(rank_cap), float(tol))


if USE_NUMBA:
    gaussian_gram = gaussian_gram_numba
    pairwise_distances = pairwise_distances_numba
else:
    gaussian_gram = gaussian_gram_numpy
    pairwise_distances = pairwise_distances_numpy

# the pivoted factorization is BLAS-bound (per-pivot GEMV row updates), where
# the vectorized implementation beats the jitted loops at every size tried;
# see benchmarks/bench_kernels.py
icf_factor = icf_numpy
