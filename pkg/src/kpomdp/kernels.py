"""Kernel evaluation, Gram matrices, feature columns, bandwidth selection.

Two kernel families are supported: a product of per-coordinate Gaussians for
continuous domains, and the identity (delta) kernel for discrete domains.
Sample sets are numpy arrays: float ``(n, d)`` for Gaussian kernels, and
integer ``(n, d)`` or string/integer ``(n,)`` for delta kernels.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _accel
from .exceptions import EmptySampleError, KernelDomainError, ZeroMedianError

GAUSSIAN = "gaussian-product"
DELTA = "delta"


@dataclass(frozen=True)
class KernelSpec:
    """A positive-definite kernel description for one domain.

    For the Gaussian family either ``bandwidths`` is given directly or
    ``divisors`` marks the kernel for median-heuristic resolution against a
    sample set (one divisor per coordinate, sigma = median distance / divisor).
    """

    family: str
    bandwidths: Optional[tuple] = None
    divisors: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in (GAUSSIAN, DELTA):
            raise KernelDomainError(f"unknown kernel family {self.family!r}")
        if self.family == DELTA and (self.bandwidths or self.divisors):
            raise KernelDomainError("delta kernel takes no bandwidths")
        if self.family == GAUSSIAN:
            if self.bandwidths is not None and any(b <= 0 for b in self.bandwidths):
                raise KernelDomainError("bandwidths must be strictly positive")
            if self.divisors is not None and any(d <= 0 for d in self.divisors):
                raise KernelDomainError("divisors must be strictly positive")

    @property
    def resolved(self) -> bool:
        return self.family == DELTA or self.bandwidths is not None


def gaussian_kernel(bandwidths: Sequence[float]) -> KernelSpec:
    return KernelSpec(GAUSSIAN, bandwidths=tuple(float(b) for b in bandwidths))


def delta_kernel() -> KernelSpec:
    return KernelSpec(DELTA)


def _as_points(spec: KernelSpec, points) -> np.ndarray:
    """Validate a sample array against the kernel domain; returns 2-d view for gaussian."""
    arr = np.asarray(points)
    if spec.family == GAUSSIAN:
        if not np.issubdtype(arr.dtype, np.floating) and not np.issubdtype(
            arr.dtype, np.integer
        ):
            raise KernelDomainError("kernel/point domain incompatible")
        arr = np.atleast_1d(arr.astype(float))
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise KernelDomainError("kernel/point domain incompatible")
        if spec.bandwidths is not None and arr.shape[1] != len(spec.bandwidths):
            raise KernelDomainError("kernel/point domain incompatible")
        return arr
    # delta: discrete symbols (strings or integers), one row per point
    if np.issubdtype(arr.dtype, np.floating):
        raise KernelDomainError("kernel/point domain incompatible")
    if arr.ndim == 0:
        arr = arr[None]
    if arr.ndim > 2:
        raise KernelDomainError("kernel/point domain incompatible")
    return arr


def _point_row(x) -> np.ndarray:
    """A single point as a one-row sample array."""
    return np.asarray(x)[None]


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate k(x, y) for two single points."""
    return float(gram(spec, _point_row(x), _point_row(y))[0, 0])


def gram(spec: KernelSpec, rows, cols) -> np.ndarray:
    """Gram matrix with entry (i, j) = k(rows_i, cols_j)."""
    r = _as_points(spec, rows)
    c = _as_points(spec, cols)
    if r.shape[0] == 0 or c.shape[0] == 0:
        raise EmptySampleError("empty sample set")
    if spec.family == GAUSSIAN:
        if spec.bandwidths is None:
            raise KernelDomainError("gaussian kernel bandwidths not resolved")
        out = _accel.gaussian_gram(r, c, np.asarray(spec.bandwidths, dtype=float))
        return _accel.flush_tiny(out)
    if r.ndim != c.ndim or (r.ndim == 2 and r.shape[1] != c.shape[1]):
        raise KernelDomainError("kernel/point domain incompatible")
    if r.ndim == 1:
        eq = r[:, None] == c[None, :]
    else:
        eq = (r[:, None, :] == c[None, :, :]).all(axis=2)
    return eq.astype(float)


def feature_column(spec: KernelSpec, samples, x) -> np.ndarray:
    """n-vector of kernel evaluations of every sample against one point x."""
    return gram(spec, samples, _point_row(x))[:, 0]


def median_heuristic(points, divisor: float) -> float:
    """Median of nonzero pairwise Euclidean distances, divided by ``divisor``."""
    if divisor <= 0:
        raise ValueError("divisor must be positive")
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] < 2:
        raise ZeroMedianError("zero median distance")
    dists = _accel.pairwise_distances(arr)
    dists = dists[dists > 0.0]
    if dists.size == 0:
        raise ZeroMedianError("zero median distance")
    return float(np.median(dists)) / divisor


def resolve_bandwidths(spec: KernelSpec, samples) -> KernelSpec:
    """Fill in Gaussian bandwidths from samples via the per-coordinate median heuristic."""
    if spec.family != GAUSSIAN or spec.bandwidths is not None:
        return spec
    if spec.divisors is None:
        raise KernelDomainError("gaussian kernel needs bandwidths or divisors")
    arr = _as_points(spec, samples)
    if arr.shape[1] != len(spec.divisors):
        raise KernelDomainError("kernel/point domain incompatible")
    bw = tuple(
        median_heuristic(arr[:, d], spec.divisors[d]) for d in range(arr.shape[1])
    )
    return KernelSpec(GAUSSIAN, bandwidths=bw)


def hadamard(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Element-wise product of two equally shaped Gram matrices."""
    a = np.asarray(g1, dtype=float)
    b = np.asarray(g2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a * b
