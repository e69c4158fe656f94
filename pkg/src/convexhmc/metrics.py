"""Distance estimators and convergence diagnostics.

Wasserstein-1 between equal-weight empirical measures is computed exactly:
by sorting in one dimension and by an exact minimum-cost perfect matching
in general.  The sliced variant is a scalable lower-bound surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

ASSIGNMENT_GUARD = 2048


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SampleBatch:
    """Equal-weight point cloud; rows are points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise MetricError("points must be a nonempty (n, d) matrix")
        if not np.all(np.isfinite(pts)):
            raise MetricError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _points(batch) -> np.ndarray:
    pts = batch.points if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def w1_exact_1d(a, b) -> float:
    """Exact W1 between two equal-size empirical measures on the line."""
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    if a.size != b.size:
        raise MetricError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise MetricError("samples must be nonempty")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def w1_assignment(a, b) -> float:
    """Exact W1 via minimum-cost perfect matching on the Euclidean costs."""
    pa, pb = _points(a), _points(b)
    if pa.shape != pb.shape:
        raise MetricError(f"batch shapes differ: {pa.shape} vs {pb.shape}")
    if pa.shape[0] > ASSIGNMENT_GUARD:
        raise MetricError(f"assignment solver capped at n <= {ASSIGNMENT_GUARD}, got {pa.shape[0]}")
    cost = cdist(pa, pb)
    rows, cols = linear_sum_assignment(cost)
    # summing the matched costs in sorted order makes the value invariant
    # under swapping the two batches
    return float(np.sort(cost[rows, cols]).mean())


def w1_sliced(a, b, directions: int, seed: int) -> float:
    """Max over random unit directions of the exact 1-d W1 of projections.

    Each projection is 1-Lipschitz, so the result never exceeds the true W1.
    """
    if directions < 1:
        raise MetricError(f"directions must be >= 1, got {directions}")
    pa, pb = _points(a), _points(b)
    if pa.shape != pb.shape:
        raise MetricError(f"batch shapes differ: {pa.shape} vs {pb.shape}")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(directions):
        u = rng.standard_normal(pa.shape[1])
        u /= np.linalg.norm(u)
        best = max(best, w1_exact_1d(pa @ u, pb @ u))
    return best


def prokhorov_upper(a, b) -> float:
    """Prokhorov distance is bounded by the square root of W1."""
    return math.sqrt(w1_assignment(a, b))


def integrated_autocorr_time(x: np.ndarray) -> float:
    """Geyer initial-monotone-sequence estimate of the autocorrelation time."""
    x = np.ravel(np.asarray(x, dtype=float))
    n = x.size
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)  # a constant series carries a single effective sample
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}, truncated at the first
    # nonpositive pair and forced monotone (Geyer's initial sequence)
    m = n // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m : 2]
    stop = np.argmax(pairs <= 0.0) if np.any(pairs <= 0.0) else len(pairs)
    pairs = np.minimum.accumulate(pairs[:stop]) if stop else pairs[:0]
    tau = 2.0 * float(np.sum(pairs)) - 1.0
    return max(1.0, tau)


def effective_sample_size(x: np.ndarray) -> float:
    x = np.ravel(np.asarray(x, dtype=float))
    return x.size / integrated_autocorr_time(x)


@dataclass(frozen=True)
class MomentTestResult:
    passed: bool
    z_mean: np.ndarray
    z_var: np.ndarray
    threshold: float = 5.0


def gaussian_moment_test(trace, eigs, burn_in: int) -> MomentTestResult:
    """Check per-coordinate mean and variance against N(0, 1/lambda).

    z-scores use autocorrelation-adjusted effective sample sizes; the test
    passes iff every |z| < 5.
    """
    states = np.asarray(getattr(trace, "states", trace), dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if burn_in < 0 or burn_in >= states.shape[0]:
        raise MetricError(f"burn_in must lie in [0, {states.shape[0] - 1}], got {burn_in}")
    eigs = np.atleast_1d(np.asarray(eigs, dtype=float))
    if eigs.size != states.shape[1]:
        raise MetricError(f"got {eigs.size} eigenvalues for {states.shape[1]} coordinates")
    x = states[burn_in:]
    z_mean = np.empty(x.shape[1])
    z_var = np.empty(x.shape[1])
    for j in range(x.shape[1]):
        col = x[:, j]
        target_var = 1.0 / eigs[j]
        ess_mean = effective_sample_size(col)
        sample_var = float(np.var(col))
        se_mean = math.sqrt(max(sample_var, 1e-300) / ess_mean)
        z_mean[j] = float(col.mean()) / se_mean
        centered_sq = (col - col.mean()) ** 2
        ess_var = effective_sample_size(centered_sq)
        se_var = target_var * math.sqrt(2.0 / ess_var)
        z_var[j] = (sample_var - target_var) / se_var
    passed = bool(np.all(np.abs(z_mean) < 5.0) and np.all(np.abs(z_var) < 5.0))
    return MomentTestResult(passed=passed, z_mean=z_mean, z_var=z_var)
