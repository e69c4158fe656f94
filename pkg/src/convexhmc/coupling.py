"""Synchronous couplings, contraction certificates, drift and good-set checks.

These are the runtime counterparts of the contraction and drift analysis:
two chains sharing one momentum update sequence contract deterministically,
the one-step flow contracts pairs with equal momenta, and the exponential
moment of |X_1| satisfies an affine drift bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .integrators import (GoodSetSpec, IntegratorSpec, PhasePoint, hamiltonian,
                          integrate, guarded_step, reference_flow)
from .kernels import (CostLedger, KernelSpec, MomentumSource,
                      default_integration_time, ideal_step)
from .potentials import Potential, SeparablePotential

DISTANCE_FLOOR = 1e-12


class CouplingError(RuntimeError):
    pass


def contraction_bound(pot: Potential, T: float) -> float:
    """One-step bound 1 - (sqrt(m2) T)^2 / 8 for the exact flow."""
    return 1.0 - 0.125 * pot.m2 * T * T


def kernel_contraction_bound(pot: Potential) -> float:
    """Per-step bound 1 - (m2/M2)^2/64 at the largest admissible T."""
    return 1.0 - (pot.m2 / pot.M2) ** 2 / 64.0


@dataclass(frozen=True)
class CouplingReport:
    distances: np.ndarray
    fitted_rate: float
    bound: float
    violations: Optional[int]
    degenerate: bool = False

    @property
    def passed(self) -> bool:
        if self.degenerate:
            return False
        ok_rate = self.fitted_rate <= self.bound
        return ok_rate and (self.violations is None or self.violations == 0)


@dataclass(frozen=True)
class DriftReport:
    """Log-space summary of the exponential-moment drift check.

    ``log_means[i]`` estimates log E[exp |X_1|] for starts of norm
    ``radii[i]``; ``log_se`` are delta-method standard errors of the log.
    The affine envelope est <= slope * e^r + intercept uses the largest
    radius for the slope, so ``slope`` estimates the per-step decay factor
    where the contraction branch dominates.
    """

    radii: np.ndarray
    log_means: np.ndarray
    log_se: np.ndarray
    log_a_hat: float
    slope: float
    intercept_log: float
    feasible: bool

    @property
    def slopes(self) -> np.ndarray:
        return np.exp(self.log_means - self.radii)


def _fit_geometric_rate(distances: np.ndarray) -> tuple[float, bool]:
    above = distances > DISTANCE_FLOOR
    cut = int(np.argmin(above)) if not above.all() else len(distances)
    segment = distances[:cut]
    if len(segment) < 2:
        return float("nan"), True
    steps = np.arange(len(segment))
    slope = np.polyfit(steps, np.log(segment), 1)[0]
    return float(np.exp(slope)), False


def couple_synchronous(pot: Potential, spec: KernelSpec, x0: np.ndarray, y0: np.ndarray,
                       steps: int, seed: int) -> CouplingReport:
    """Run two chains on one momentum source and fit the contraction rate.

    The rate is fit by least squares on log distances over the pre-floor
    segment.  A start below the distance floor yields a degenerate report
    rather than an exception.  Per-step violations of the kernel
    contraction bound are counted for the ideal kernel only.
    """
    if steps < 1:
        raise CouplingError(f"steps must be >= 1, got {steps}")
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    source = MomentumSource(seed, pot.dim)
    ledger = CostLedger()
    distances = np.empty(steps + 1)
    distances[0] = np.linalg.norm(x - y)
    for i in range(steps):
        p = source.next_momentum()
        if spec.kind == "ideal":
            x = ideal_step(pot, spec.T, x, p, tol=spec.integrator.theta)
            y = ideal_step(pot, spec.T, y, p, tol=spec.integrator.theta)
        elif spec.kind == "unadjusted":
            x = integrate(pot, spec.integrator, PhasePoint(x, p), ledger).q
            y = integrate(pot, spec.integrator, PhasePoint(y, p), ledger).q
        else:
            u = source.next_uniform()
            x = _metropolis_shared(pot, spec, x, p, u, ledger)
            y = _metropolis_shared(pot, spec, y, p, u, ledger)
        distances[i + 1] = np.linalg.norm(x - y)
    rate, degenerate = _fit_geometric_rate(distances)
    bound = kernel_contraction_bound(pot)
    violations = None
    if spec.kind == "ideal":
        violations = int(np.sum(distances[1:] > bound * distances[:-1] + 1e-9))
    return CouplingReport(distances=distances, fitted_rate=rate, bound=bound,
                          violations=violations, degenerate=degenerate)


def _metropolis_shared(pot, spec, x, p, u, ledger):
    start = PhasePoint(x, p)
    prop = integrate(pot, spec.integrator, start, ledger)
    d_h = hamiltonian(pot, prop) - hamiltonian(pot, start)
    if d_h <= 0.0 or u < math.exp(-d_h):
        return prop.q
    return np.array(x, dtype=float)


def _pairs_with_shared_momenta(pot: Potential, trials: int, rng: np.random.Generator):
    radius = math.sqrt(pot.dim / pot.m2)
    while True:
        g = rng.standard_normal((2 * trials, pot.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = radius * rng.random(2 * trials) ** (1.0 / pot.dim)
        qs = g * r[:, None]
        x0, y0 = qs[:trials], qs[trials:]
        if np.all(np.linalg.norm(x0 - y0, axis=1) > 1e-6 * radius):
            break
    p = rng.standard_normal((trials, pot.dim))
    return x0, y0, p


def contraction_certificate(pot: Potential, T: float, trials: int, seed: int,
                            tol: float = 1e-10) -> float:
    """Worst end-to-start distance ratio over random pairs with shared momenta.

    Draws position pairs uniformly in the ball of radius sqrt(d/m2) with a
    common Gaussian momentum, integrates both with the reference flow, and
    returns max |q_T^(2)-q_T^(1)| / |q_0^(2)-q_0^(1)|.  The certificate
    passes iff the result is <= 1 - m2 T^2/8 + 1e-6.
    """
    t_max = default_integration_time(pot)
    if T < 0.0 or T > t_max * (1.0 + 1e-12):
        raise CouplingError(f"T must lie in [0, {t_max:.6g}], got {T}")
    if trials < 1:
        raise CouplingError(f"trials must be >= 1, got {trials}")
    if T == 0.0:
        return 1.0
    rng = np.random.default_rng(seed)
    x0, y0, p = _pairs_with_shared_momenta(pot, trials, rng)
    start = PhasePoint(np.vstack([x0, y0]), np.vstack([p, p]))
    end = reference_flow(pot, start, T, tol=tol)
    d0 = np.linalg.norm(x0 - y0, axis=1)
    d1 = np.linalg.norm(end.q[:trials] - end.q[trials:], axis=1)
    return float(np.max(d1 / d0))


def _batch_kernel_step(pot: Potential, spec: KernelSpec, x0: np.ndarray,
                       momenta: np.ndarray, uniforms: np.ndarray,
                       ledger: Optional[CostLedger] = None) -> np.ndarray:
    start = PhasePoint(x0, momenta)
    if spec.kind == "ideal":
        if pot.is_gaussian:
            return integrate(pot, IntegratorSpec("exact_gaussian", T=spec.T), start).q
        return reference_flow(pot, start, spec.T, tol=spec.integrator.theta).q
    prop = integrate(pot, spec.integrator, start, ledger)
    if spec.kind == "unadjusted":
        return prop.q
    d_h = hamiltonian(pot, prop) - hamiltonian(pot, start)
    accept = (d_h <= 0.0) | (uniforms < np.exp(-np.minimum(np.maximum(d_h, 0.0), 700.0)))
    return np.where(accept[:, None], prop.q, x0)


def drift_check(pot: Potential, spec: KernelSpec, radii: Sequence[float],
                replicas: int, seed: int) -> DriftReport:
    """Estimate E[exp |X_1|] from starts of each norm, in log space.

    Reports the smallest A making every radius satisfy
    E[exp |X_1|] <= e^(r-1) + A, together with the affine envelope
    (slope from the largest radius, log intercept covering the rest).
    """
    if replicas < 100:
        raise CouplingError(f"need replicas >= 100 for stable estimates, got {replicas}")
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii < 0.0):
        raise CouplingError("radii must be a nonempty list of nonnegative reals")
    ss = np.random.SeedSequence(seed)
    log_means = np.empty(radii.size)
    log_ses = np.empty(radii.size)
    for i, r in enumerate(radii):
        rng = np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))
        dirs = rng.standard_normal((replicas, pot.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        x0 = r * dirs
        momenta = rng.standard_normal((replicas, pot.dim))
        uniforms = rng.random(replicas)
        x1 = _batch_kernel_step(pot, spec, x0, momenta, uniforms)
        v = np.linalg.norm(x1, axis=1)
        log_m1 = logsumexp(v) - math.log(replicas)
        log_m2 = logsumexp(2.0 * v) - math.log(replicas)
        rel_var = max(np.expm1(log_m2 - 2.0 * log_m1), 0.0)
        log_means[i] = log_m1
        log_ses[i] = math.sqrt(rel_var / replicas)
    excess = log_means - (radii - 1.0)
    if np.any(excess > 0.0):
        # log(e^m - e^(r-1)) for the radii where the contraction term is exceeded
        with np.errstate(divide="ignore"):
            parts = [lm + math.log(-math.expm1(-e)) for lm, e in zip(log_means, excess) if e > 0.0]
        log_a_hat = max(parts)
    else:
        log_a_hat = -math.inf
    top = int(np.argmax(radii))
    slope = float(np.exp(log_means[top] - radii[top]))
    # intercept: max over radii of est_r - slope * e^r, evaluated stably
    intercept_parts = []
    for i in range(radii.size):
        log_slope_term = math.log(slope) + radii[i] if slope > 0.0 else -math.inf
        diff = log_means[i] - log_slope_term
        if diff > 0.0:
            intercept_parts.append(log_slope_term + math.log(math.expm1(diff)))
    intercept_log = max(intercept_parts) if intercept_parts else -math.inf
    feasible = bool(np.all(log_means <= np.logaddexp(radii - 1.0,
                                                     np.full_like(radii, log_a_hat)) + 1e-12))
    return DriftReport(radii=radii, log_means=log_means, log_se=log_ses,
                       log_a_hat=float(log_a_hat), slope=slope,
                       intercept_log=float(intercept_log), feasible=feasible)


def good_set_statistics(pot: SeparablePotential, spec: KernelSpec, good: GoodSetSpec,
                        steps: int, replicas: int, seed: int) -> float:
    """Fraction of replicas whose phase-space chain leaves the good set.

    Each replica runs the unadjusted chain with the guarded (toy)
    integrator from the origin; a replica counts as exited as soon as
    (X_h, p_h) falls outside the good set, any h < steps.
    """
    if steps < 1 or replicas < 1:
        raise CouplingError("steps and replicas must both be >= 1")
    if pot.dim % good.block_dim:
        raise CouplingError("good-set block size must divide the dimension")
    rng = np.random.default_rng(seed)
    x = np.zeros((replicas, pot.dim))
    exited = np.zeros(replicas, dtype=bool)
    for _ in range(steps):
        p = rng.standard_normal((replicas, pot.dim))
        state = PhasePoint(x, p)
        inside = good.contains(state)
        exited |= ~inside
        if np.all(exited):
            break
        x = guarded_step(pot, spec.integrator, good, state).q
    return float(np.mean(exited))
