import math

import numpy as np
import pytest

from convexhmc import (CostLedger, IntegratorSpec, KernelSpec, MomentumSource,
                       default_integration_time, effective_sample_size,
                       ideal_step, make_gaussian, make_perturbed_quadratic,
                       metropolis_step, run_chain, unadjusted_step)
from convexhmc.kernels import KernelError

UNIT = make_gaussian([1.0])


def exact_kernel(T=None):
    return KernelSpec("ideal", IntegratorSpec("exact_gaussian", T=T if T is not None else 0.3))


class TestMomentumSource:
    def test_bitwise_reproducible(self):
        a = MomentumSource(123, 5)
        b = MomentumSource(123, 5)
        for _ in range(600):  # crosses the internal block boundary
            np.testing.assert_array_equal(a.next_momentum(), b.next_momentum())
            assert a.next_uniform() == b.next_uniform()

    def test_streams_are_standard(self):
        src = MomentumSource(7, 3)
        draws = np.array([src.next_momentum() for _ in range(20000)])
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.03

    def test_different_seeds_differ(self):
        a = MomentumSource(1, 2).next_momentum()
        b = MomentumSource(2, 2).next_momentum()
        assert not np.array_equal(a, b)


class TestIdealStep:
    def test_quarter_period_from_rest(self):
        out = ideal_step(UNIT, math.pi / 2.0, np.array([1.0]), np.array([0.0]))
        assert out[0] == pytest.approx(0.0, abs=1e-15)

    def test_zero_time(self):
        out = ideal_step(UNIT, 0.0, np.array([1.3]), np.array([-0.2]))
        assert out[0] == 1.3

    def test_momentum_transfer(self):
        out = ideal_step(UNIT, math.pi / 2.0, np.array([0.0]), np.array([1.0]))
        assert out[0] == pytest.approx(1.0)

    def test_reference_fallback_matches_exact(self):
        pot = make_perturbed_quadratic(2, 0.0, seed=0)  # quadratic but not tagged Gaussian
        assert not pot.is_gaussian
        x, p = np.array([0.8, -0.1]), np.array([0.2, 0.5])
        out = ideal_step(pot, 0.3, x, p)
        expected = np.cos(0.3) * x + np.sin(0.3) * p
        np.testing.assert_allclose(out, expected, atol=1e-9)


class TestUnadjustedStep:
    def test_single_euler_oracle(self):
        T = 0.3
        spec = KernelSpec("unadjusted", IntegratorSpec("euler", theta=T, T=T))
        ledger = CostLedger()
        x, p = np.array([1.0, -1.0]), np.array([0.5, 0.5])
        out = unadjusted_step(make_gaussian([1.0, 1.0]), spec, x, p, ledger)
        np.testing.assert_allclose(out, x + p * T)
        assert ledger.gradient_evals == 1

    def test_theta_to_zero_approaches_ideal(self):
        T = default_integration_time(UNIT)
        x, p = np.array([1.0]), np.array([0.4])
        target = ideal_step(UNIT, T, x, p)
        gaps = []
        for theta in (T / 4.0, T / 16.0, T / 64.0):
            spec = KernelSpec("unadjusted", IntegratorSpec("euler", theta=theta, T=T))
            out = unadjusted_step(UNIT, spec, x, p, CostLedger())
            gaps.append(abs(out[0] - target[0]))
        assert gaps[2] < gaps[1] < gaps[0]
        assert gaps[2] < 1e-2

    def test_ledger_counts_compose(self):
        spec = KernelSpec("unadjusted", IntegratorSpec("leapfrog", theta=0.01, T=0.5))
        ledger = CostLedger()
        x = np.array([0.3])
        for _ in range(7):
            x = unadjusted_step(UNIT, spec, x, np.array([0.1]), ledger)
        assert ledger.gradient_evals == 7 * spec.integrator.oracle_steps * 2
        assert ledger.kernel_steps == 7


class TestMetropolisStep:
    def test_energy_decrease_always_accepted(self):
        spec = KernelSpec("metropolis", IntegratorSpec("exact_gaussian", T=0.3))
        out, ok = metropolis_step(UNIT, spec, np.array([1.0]), np.array([0.0]),
                                  u=1.0 - 1e-12, ledger=CostLedger())
        assert ok

    def test_u_zero_always_accepted(self):
        spec = KernelSpec("metropolis", IntegratorSpec("euler", theta=0.05, T=0.3))
        _, ok = metropolis_step(UNIT, spec, np.array([2.0]), np.array([1.0]), u=0.0,
                                ledger=CostLedger())
        assert ok

    def test_exact_flow_accepts_everything(self):
        spec = KernelSpec("metropolis", IntegratorSpec("exact_gaussian", T=0.3))
        trace = run_chain(UNIT, spec, np.array([1.0]), 2000, seed=5)
        assert trace.ledger.accepted == 2000
        assert trace.ledger.rejected == 0

    def test_rejected_proposal_keeps_state(self):
        # gigantic Euler step destroys energy, forcing rejection for u near 1
        spec = KernelSpec("metropolis", IntegratorSpec("euler", theta=0.3, T=0.3))
        x = np.array([3.0])
        out, ok = metropolis_step(UNIT, spec, x, np.array([3.0]), u=1.0 - 1e-9,
                                  ledger=CostLedger())
        if not ok:
            np.testing.assert_array_equal(out, x)


class TestRunChain:
    def test_empty_run(self):
        trace = run_chain(UNIT, exact_kernel(), np.array([0.7]), 0, seed=1)
        assert len(trace) == 1
        assert trace.states[0, 0] == 0.7

    def test_determinism(self):
        spec = KernelSpec("metropolis", IntegratorSpec("leapfrog", theta=0.04, T=0.3))
        a = run_chain(UNIT, spec, np.array([0.5]), 500, seed=42)
        b = run_chain(UNIT, spec, np.array([0.5]), 500, seed=42)
        np.testing.assert_array_equal(a.states, b.states)
        assert a.ledger == b.ledger

    def test_ideal_chain_stationary_moments(self):
        T = default_integration_time(UNIT)
        trace = run_chain(UNIT, exact_kernel(T), np.array([0.0]), 100_000, seed=9)
        x = trace.states[1000:, 0]
        ess = effective_sample_size(x)
        assert abs(x.mean()) <= 4.0 * x.std() / math.sqrt(ess)

    def test_momentum_sharing_bounds_ideal_vs_unadjusted(self):
        # chains driven by the same update sequence stay within the
        # accumulated per-step integrator error
        pot = UNIT
        T = default_integration_time(pot)
        theta = T / 28.0
        ideal = KernelSpec("ideal", IntegratorSpec("exact_gaussian", T=T))
        unadj = KernelSpec("unadjusted", IntegratorSpec("euler", theta=theta, T=T))
        steps = 50
        src_a = MomentumSource(17, 1)
        src_b = MomentumSource(17, 1)
        x = np.array([1.0])
        y = np.array([1.0])
        budget = 0.0
        for _ in range(steps):
            p_a = src_a.next_momentum()
            p_b = src_b.next_momentum()
            np.testing.assert_array_equal(p_a, p_b)
            h_y = pot.value(y) + 0.5 * float(p_b @ p_b)
            budget += 6.0 * theta * T * math.sqrt(h_y)
            x = ideal_step(pot, T, x, p_a)
            y = unadjusted_step(pot, unadj, y, p_b, CostLedger())
            assert abs(x[0] - y[0]) <= budget + 1e-12

    def test_metropolis_preserves_first_four_moments(self):
        lam = 1.0
        spec = KernelSpec("metropolis", IntegratorSpec("leapfrog", theta=0.04, T=0.35))
        trace = run_chain(make_gaussian([lam]), spec, np.array([0.0]), 1_000_000, seed=3)
        x = trace.states[2000:, 0]
        targets = {1: 0.0, 2: 1.0 / lam, 3: 0.0, 4: 3.0 / lam**2}
        # asymptotic SE of each moment estimate, with ESS from the moment series
        for k, target in targets.items():
            series = x**k
            ess = effective_sample_size(series)
            se = series.std() / math.sqrt(ess)
            assert abs(series.mean() - target) <= 5.0 * se, f"moment {k}"

    def test_rejection_rare_for_small_theta(self):
        # 7 (theta/T) H (A/M2) <= log(1/(1-r)) keeps the rejection
        # frequency below r while the chain stays in the bulk
        pot = UNIT
        T = default_integration_time(pot)
        r = 0.02
        steps = 4000
        h_cap = 10.0
        theta = math.log(1.0 / (1.0 - r)) * T / (7.0 * h_cap)
        spec = KernelSpec("metropolis", IntegratorSpec("euler", theta=theta, T=T))
        trace = run_chain(pot, spec, np.array([0.0]), steps, seed=21)
        in_bulk = trace.hamiltonians[:steps] <= h_cap
        rejected = ~trace.accepted[1:]
        freq = float(np.mean(rejected[in_bulk]))
        se = math.sqrt(r * (1.0 - r) / max(int(in_bulk.sum()), 1))
        assert freq <= r + 3.0 * se

    def test_invalid_inputs(self):
        with pytest.raises(KernelError):
            run_chain(UNIT, exact_kernel(), np.array([0.0]), -1, seed=0)
        with pytest.raises(KernelError):
            run_chain(UNIT, exact_kernel(), np.zeros(2), 5, seed=0)
        with pytest.raises(KernelError):
            KernelSpec("ideal", IntegratorSpec("euler", theta=0.1, T=0.3))
        with pytest.raises(KernelError):
            KernelSpec("unadjusted", IntegratorSpec("euler", theta=0.1, T=0.3), T=0.4)
