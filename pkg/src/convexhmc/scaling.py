"""Dimension-scaling study: gradient evaluations needed per target accuracy.

For each dimension d, the study runs the chain (unadjusted by default) for
I = max(50, ceil((M2/m2)^2 log(M2/(m2 eps)))) steps over many replicas and
bisects theta downward until the endpoint batch is within the W1 budget of
an exact reference sample.  The recorded cost is the ledger total, so the
fitted log-log slope of gradient evaluations against dimension exposes the
d^(1/2k) law of the k-th-order integrator.

Empirical assignment-W1 between finite batches carries a sampling floor
that grows like sqrt(d) even for perfect samples, so the budget is applied
to the floor-corrected excess: W1(chain endpoints, reference) minus
W1(second reference, reference), with common random numbers across the
bisection.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .integrators import IntegratorSpec, PhasePoint, integrate
from .kernels import CostLedger, default_integration_time
from .metrics import w1_assignment
from .potentials import Potential, make_gaussian

WORKERS_ENV = "CONVEXHMC_WORKERS"
# only Gaussian families admit the exact reference samples the W1 budget needs
FAMILIES = ("standard_gaussian",)


class ScalingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingRow:
    dim: int
    theta: float
    oracle_steps: int
    chain_steps: int
    replicas: int
    gradient_evals: int
    gradient_evals_per_chain: int
    achieved_excess_w1: float
    raw_w1: float
    reference_floor: float


@dataclass(frozen=True)
class ScalingResult:
    scheme: str
    order: int
    epsilon: float
    rows: tuple
    slope: Optional[float]
    slope_stderr: Optional[float]

    def row(self, dim: int) -> ScalingRow:
        for r in self.rows:
            if r.dim == dim:
                return r
        raise KeyError(dim)


def _family_potential(family: str, dim: int) -> Potential:
    if family == "standard_gaussian":
        return make_gaussian(np.ones(dim))
    raise ScalingError(f"unknown family {family!r}; expected one of {FAMILIES}")


def chain_length(pot: Potential, epsilon: float, c: float = 1.0, floor: int = 50) -> int:
    ratio = pot.M2 / pot.m2
    return max(floor, math.ceil(c * ratio**2 * math.log(ratio / epsilon)))


def _endpoints(pot: Potential, kernel: str, scheme: str, theta: float, T: float,
               steps: int, replicas: int, seed: int, ledger: CostLedger) -> np.ndarray:
    spec = IntegratorSpec(scheme, theta=theta, T=T)
    rng = np.random.default_rng(seed)
    x = np.zeros((replicas, pot.dim))
    per_oracle = spec.gradient_evals_per_oracle
    n = spec.oracle_steps
    for _ in range(steps):
        p = rng.standard_normal((replicas, pot.dim))
        start = PhasePoint(x, p)
        out = integrate(pot, spec, start)
        if kernel == "metropolis":
            d_h = (pot.value(out.q) + 0.5 * np.sum(out.p**2, axis=-1)
                   - pot.value(x) - 0.5 * np.sum(p * p, axis=-1))
            accept = (d_h <= 0.0) | (rng.random(replicas)
                                     < np.exp(-np.minimum(np.maximum(d_h, 0.0), 700.0)))
            x = np.where(accept[:, None], out.q, x)
        else:
            x = out.q
        ledger.gradient_evals += per_oracle * n * replicas
        ledger.kernel_steps += replicas
    return x


def _gaussian_reference(pot: Potential, replicas: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((replicas, pot.dim)) / np.sqrt(pot.precision_eigenvalues)


def _run_row(args) -> ScalingRow:
    (family, kernel, scheme, order, dim, epsilon, replicas, seed, max_halvings, refine) = args
    pot = _family_potential(family, dim)
    T = default_integration_time(pot)
    steps = chain_length(pot, epsilon)
    ref = _gaussian_reference(pot, replicas, seed * 7 + 1)
    ref2 = _gaussian_reference(pot, replicas, seed * 7 + 2)
    floor = w1_assignment(ref2, ref)
    chain_seed = seed * 7 + 3

    def measure(theta):
        ledger = CostLedger()
        ends = _endpoints(pot, kernel, scheme, theta, T, steps, replicas, chain_seed, ledger)
        return w1_assignment(ends, ref) - floor, ledger

    theta0 = T if order == 1 else min(1.0, 1.0 / pot.M2)
    theta = theta0
    excess, ledger = measure(theta)
    if excess > epsilon:
        for attempt in range(max_halvings + 1):
            if attempt == max_halvings:
                raise ScalingError(
                    f"theta bisection exhausted {max_halvings} halvings at d={dim} "
                    f"without reaching the W1 budget {epsilon}")
            theta /= 2.0
            excess, ledger = measure(theta)
            if excess <= epsilon:
                break
        lo, hi = math.log(theta), math.log(theta * 2.0)
        best = (theta, excess, ledger)
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            mid_excess, mid_ledger = measure(math.exp(mid))
            if mid_excess <= epsilon:
                lo = mid
                best = (math.exp(mid), mid_excess, mid_ledger)
            else:
                hi = mid
        theta, excess, ledger = best
    spec = IntegratorSpec(scheme, theta=theta, T=T)
    return ScalingRow(
        dim=dim,
        theta=theta,
        oracle_steps=spec.oracle_steps,
        chain_steps=steps,
        replicas=replicas,
        gradient_evals=ledger.gradient_evals,
        gradient_evals_per_chain=ledger.gradient_evals // replicas,
        achieved_excess_w1=float(excess),
        raw_w1=float(excess + floor),
        reference_floor=float(floor),
    )


def _worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_scaling_study(family: str, scheme: str, dims: Sequence[int], epsilon: float,
                      seed: int, kernel: str = "unadjusted", replicas: int = 1024,
                      max_halvings: int = 20, refine: int = 5) -> ScalingResult:
    """Fit the gradient-evaluation exponent over a list of dimensions.

    ``epsilon`` is the absolute budget on the floor-corrected excess W1 of
    the replica-endpoint batch against an exact reference batch.  Rows run
    in a process pool when the CONVEXHMC_WORKERS environment variable asks
    for more than one worker; outputs are identical either way.
    """
    dims = [int(d) for d in dims]
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ScalingError("dims must be strictly increasing")
    if scheme not in ("euler", "leapfrog"):
        raise ScalingError(f"scheme must be euler or leapfrog, got {scheme!r}")
    if epsilon <= 0.0:
        raise ScalingError(f"epsilon must be positive, got {epsilon}")
    if replicas > 2048:
        raise ScalingError("replicas capped at 2048 by the exact assignment solver")
    if kernel not in ("unadjusted", "metropolis"):
        raise ScalingError(f"kernel must be unadjusted or metropolis, got {kernel!r}")
    order = 1 if scheme == "euler" else 2
    jobs = [(family, kernel, scheme, order, d, epsilon, replicas, seed + i, max_halvings,
             refine) for i, d in enumerate(dims)]
    workers = _worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = tuple(pool.map(_run_row, jobs))
    else:
        rows = tuple(_run_row(job) for job in jobs)
    slope = stderr = None
    if len(rows) >= 2:
        x = np.log([r.dim for r in rows])
        y = np.log([r.gradient_evals_per_chain for r in rows])
        xc = x - x.mean()
        slope = float(np.dot(xc, y) / np.dot(xc, xc))
        resid = y - (y.mean() + slope * xc)
        dof = max(len(rows) - 2, 1)
        stderr = float(np.sqrt(np.dot(resid, resid) / dof / np.dot(xc, xc)))
    return ScalingResult(scheme=scheme, order=order, epsilon=float(epsilon),
                         rows=rows, slope=slope, slope_stderr=stderr)
