"""Hamiltonian flow maps: exact, Euler, leapfrog, reference and guarded.

The composed integrator follows the convention that an accuracy parameter
theta and order k translate into ceil(T / theta^(1/k)) oracle applications,
each advancing time theta^(1/k).  In particular the leapfrog oracle's
internal step length is sqrt(theta).  The final step is taken at full
length, so the composed map can overshoot time T by less than one step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .potentials import Potential

SCHEMES = ("exact_gaussian", "euler", "leapfrog", "reference", "guarded")
_ORACLE_ORDER = {"euler": 1, "leapfrog": 2, "guarded": 2}


class IntegratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    """Position/momentum pair; arrays of shape (..., d) carry batches."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape:
            raise IntegratorError(f"q and p shapes differ: {q.shape} vs {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class IntegratorSpec:
    """Identifies one numerical flow map.

    For the ``reference`` scheme, ``theta`` is the convergence tolerance of
    the step-halving refinement rather than an oracle step.
    """

    scheme: str
    theta: float = 1e-3
    T: float = 1.0
    order: Optional[int] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise IntegratorError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.theta <= 0.0:
            raise IntegratorError(f"theta must be positive, got {self.theta}")
        if self.T < 0.0:
            raise IntegratorError(f"T must be nonnegative, got {self.T}")
        if self.order is None:
            object.__setattr__(self, "order", _ORACLE_ORDER.get(self.scheme))
        elif self.scheme in _ORACLE_ORDER and self.order != _ORACLE_ORDER[self.scheme]:
            raise IntegratorError(
                f"scheme {self.scheme!r} has order {_ORACLE_ORDER[self.scheme]}, got {self.order}")

    @property
    def oracle_steps(self) -> int:
        """Oracle applications taken by the composed map: ceil(T/theta^(1/k))."""
        if self.scheme not in _ORACLE_ORDER:
            raise IntegratorError(f"scheme {self.scheme!r} does not step an oracle")
        if self.T == 0.0:
            return 0
        return math.ceil(self.T / self.theta ** (1.0 / self.order))

    @property
    def gradient_evals_per_oracle(self) -> int:
        return {"euler": 1, "leapfrog": 2}.get(self.scheme, 0)


@dataclass(frozen=True)
class GoodSetSpec:
    """Phase-space region where the high-order integrator is trusted.

    Membership is max_i |q^(i)| < g_inf and max_i |p^(i)| < g_inf and
    |p| > g_2, with blockwise norms over consecutive blocks of size
    ``block_dim`` and strict inequalities throughout.
    """

    g_inf: float
    g_2: float
    block_dim: int

    def __post_init__(self):
        if self.g_inf <= 0.0:
            raise IntegratorError(f"g_inf must be positive, got {self.g_inf}")
        if self.g_2 < 0.0:
            raise IntegratorError(f"g_2 must be nonnegative, got {self.g_2}")
        if self.block_dim < 1:
            raise IntegratorError(f"block_dim must be >= 1, got {self.block_dim}")

    def _block_norms(self, x: np.ndarray) -> np.ndarray:
        m = self.block_dim
        if x.shape[-1] % m:
            raise IntegratorError(f"dimension {x.shape[-1]} not a multiple of block size {m}")
        parts = x.reshape(x.shape[:-1] + (x.shape[-1] // m, m))
        return np.linalg.norm(parts, axis=-1)

    def contains(self, x: PhasePoint) -> np.ndarray:
        """Membership test; returns a scalar bool or a boolean batch."""
        q_ok = np.max(self._block_norms(x.q), axis=-1) < self.g_inf
        p_ok = np.max(self._block_norms(x.p), axis=-1) < self.g_inf
        total = np.linalg.norm(x.p, axis=-1) > self.g_2
        return q_ok & p_ok & total


def default_good_set(dim: int, block_dim: int) -> GoodSetSpec:
    """Desk-scale defaults g_inf = 10 sqrt(m), g_2 = sqrt(d)/2."""
    return GoodSetSpec(g_inf=10.0 * math.sqrt(block_dim), g_2=math.sqrt(dim) / 2.0,
                       block_dim=block_dim)


def hamiltonian(pot: Potential, x: PhasePoint) -> np.ndarray:
    """H(q, p) = U(q) + |p|^2 / 2."""
    return pot.value(x.q) + 0.5 * np.sum(np.asarray(x.p) ** 2, axis=-1)


def euler_step(pot: Potential, x: PhasePoint, theta: float) -> PhasePoint:
    """One first-order oracle step: (q + p theta, p - theta U'(q))."""
    g = pot.gradient(x.q)
    return PhasePoint(x.q + x.p * theta, x.p - theta * g)


def leapfrog_step(pot: Potential, x: PhasePoint, theta: float) -> PhasePoint:
    """One second-order oracle step of internal length sqrt(theta)."""
    h = math.sqrt(theta)
    p_half = x.p - 0.5 * h * pot.gradient(x.q)
    q_new = x.q + h * p_half
    p_new = p_half - 0.5 * h * pot.gradient(q_new)
    return PhasePoint(q_new, p_new)


def _euler_run(pot, q, p, theta, n):
    for _ in range(n):
        g = pot.gradient(q)
        q = q + theta * p
        p = p - theta * g
    return q, p


def _leapfrog_run(pot, q, p, h, n):
    half = 0.5 * h
    for _ in range(n):
        p = p - half * pot.gradient(q)
        q = q + h * p
        p = p - half * pot.gradient(q)
    return q, p


def exact_gaussian_flow(eigs: Sequence[float], x: PhasePoint, T: float) -> PhasePoint:
    """Closed-form Hamiltonian flow for U(q) = 1/2 sum lambda_i q_i^2."""
    lam = np.asarray(eigs, dtype=float)
    w = np.sqrt(lam)
    c, s = np.cos(w * T), np.sin(w * T)
    q = x.q * c + (x.p / w) * s
    p = -x.q * w * s + x.p * c
    return PhasePoint(q, p)


def reference_flow(pot: Potential, x: PhasePoint, T: float, tol: float = 1e-10) -> PhasePoint:
    """High-resolution stand-in for the exact flow on generic targets.

    Runs the leapfrog composition, halving theta until two consecutive
    refinements land within ``tol`` of each other (positions and momenta).
    """
    if tol <= 0.0:
        raise IntegratorError(f"tol must be positive, got {tol}")
    if T == 0.0:
        return x
    theta = (T / 8.0) ** 2
    prev = None
    for _ in range(31):
        h = math.sqrt(theta)
        n = math.ceil(T / h)
        h = T / n  # land exactly on T; the proxy should not inherit the overshoot
        q, p = _leapfrog_run(pot, x.q, x.p, h, n)
        if prev is not None:
            dq = np.max(np.linalg.norm(q - prev[0], axis=-1))
            dp = np.max(np.linalg.norm(p - prev[1], axis=-1))
            if max(dq, dp) < tol:
                return PhasePoint(q, p)
        prev = (q, p)
        theta *= 0.5
    raise IntegratorError(f"reference flow did not converge to tol={tol} within 30 halvings")


def flow_trajectory(pot: Potential, x: PhasePoint, T: float, snapshots: int,
                    tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Converged trajectory sampled at times j*T/snapshots, j = 0..snapshots.

    Returns (times, qs, ps) with qs[j], ps[j] the phase point at times[j].
    """
    if snapshots < 1:
        raise IntegratorError("need at least one snapshot")
    times = np.linspace(0.0, T, snapshots + 1)
    substeps = 1
    prev = None
    for _ in range(31):
        h = (T / snapshots) / substeps
        q, p = np.asarray(x.q, dtype=float), np.asarray(x.p, dtype=float)
        qs, ps = [q], [p]
        for _ in range(snapshots):
            q, p = _leapfrog_run(pot, q, p, h, substeps)
            qs.append(q)
            ps.append(p)
        qs, ps = np.stack(qs), np.stack(ps)
        if prev is not None:
            err = max(np.max(np.abs(qs - prev[0])), np.max(np.abs(ps - prev[1])))
            if err < tol:
                return times, qs, ps
        prev = (qs, ps)
        substeps *= 2
    raise IntegratorError(f"trajectory refinement did not converge to tol={tol}")


def integrate(pot: Potential, spec: IntegratorSpec, x: PhasePoint, ledger=None) -> PhasePoint:
    """Apply the flow map identified by ``spec`` from phase point ``x``.

    Oracle schemes take exactly ceil(T/theta^(1/k)) steps and charge the
    ledger with (gradient evals per oracle call) * (step count).
    """
    if spec.scheme == "exact_gaussian":
        if not pot.is_gaussian:
            raise IntegratorError("exact_gaussian scheme requires a Gaussian potential")
        return exact_gaussian_flow(pot.precision_eigenvalues, x, spec.T)
    if spec.scheme == "reference":
        return reference_flow(pot, x, spec.T, tol=spec.theta)
    if spec.scheme == "guarded":
        raise IntegratorError("guarded scheme needs a GoodSetSpec; call guarded_step")
    n = spec.oracle_steps
    if spec.scheme == "euler":
        q, p = _euler_run(pot, x.q, x.p, spec.theta, n)
    else:
        q, p = _leapfrog_run(pot, x.q, x.p, math.sqrt(spec.theta), n)
    if ledger is not None:
        ledger.gradient_evals += spec.gradient_evals_per_oracle * n
    return PhasePoint(q, p)


def guarded_step(pot: Potential, spec: IntegratorSpec, good: GoodSetSpec,
                 x: PhasePoint, ledger=None) -> PhasePoint:
    """Toy integrator: high-order map inside the good set, Euler outside.

    Both branches run for the same theta and T; the Euler branch composes
    with order k = 1, the good-set branch with the leapfrog oracle (k = 2).
    Batches are split row-by-row according to membership.
    """
    if pot.dim % good.block_dim:
        raise IntegratorError("potential dimension is not a multiple of the good-set block size")
    sharp = IntegratorSpec("leapfrog", theta=spec.theta, T=spec.T)
    club = IntegratorSpec("euler", theta=spec.theta, T=spec.T)
    inside = good.contains(x)
    if np.ndim(inside) == 0:
        return integrate(pot, sharp if inside else club, x, ledger)
    q = np.array(x.q, dtype=float)
    p = np.array(x.p, dtype=float)
    for mask, branch in ((inside, sharp), (~inside, club)):
        if np.any(mask):
            out = integrate(pot, branch, PhasePoint(q[mask], p[mask]), ledger)
            q[mask], p[mask] = out.q, out.p
    return PhasePoint(q, p)


def energy_error(pot: Potential, spec: IntegratorSpec, x: PhasePoint,
                 ledger=None) -> np.ndarray:
    """|H(flow(x)) - H(x)| for the map identified by ``spec``."""
    return np.abs(hamiltonian(pot, integrate(pot, spec, x, ledger)) - hamiltonian(pot, x))
