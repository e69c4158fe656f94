import math

import numpy as np
import pytest

from convexhmc import (CostLedger, GoodSetSpec, IntegratorError, IntegratorSpec,
                       PhasePoint, default_integration_time, energy_error, euler_step,
                       exact_gaussian_flow, flow_trajectory, guarded_step, hamiltonian,
                       integrate, leapfrog_step, make_gaussian, make_perturbed_quadratic,
                       product_potential, reference_flow)

UNIT = make_gaussian([1.0])


def pp(q, p):
    return PhasePoint(np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(p, float)))


def sample_states(pot, n, seed, energy_cap=None):
    # starting phase points with H <= energy_cap (default 10 d)
    cap = 10.0 * pot.dim if energy_cap is None else energy_cap
    rng = np.random.default_rng(seed)
    qs, ps = [], []
    while len(qs) < n:
        q = rng.standard_normal(pot.dim) / math.sqrt(pot.M2)
        p = rng.standard_normal(pot.dim)
        if pot.value(q) + 0.5 * p @ p <= cap:
            qs.append(q)
            ps.append(p)
    return PhasePoint(np.array(qs), np.array(ps))


class TestOracles:
    def test_euler_from_rest(self):
        out = euler_step(UNIT, pp(1.0, 0.0), 0.1)
        assert out.q[0] == pytest.approx(1.0)
        assert out.p[0] == pytest.approx(-0.1)

    def test_euler_zero_step(self):
        out = euler_step(UNIT, pp(1.3, -0.4), 0.0)
        assert out.q[0] == 1.3 and out.p[0] == -0.4

    def test_euler_single_step_by_hand(self):
        # q* = q + p theta = 0.5, p* = p - theta U'(q) = 1 - 0.5*0 = 1
        out = euler_step(UNIT, pp(0.0, 1.0), 0.5)
        assert out.q[0] == pytest.approx(0.5)
        assert out.p[0] == pytest.approx(1.0)

    def test_leapfrog_by_hand(self):
        # sqrt(theta) = 0.1: p_half = -0.05, q' = 0.995, p' = -0.09975
        out = leapfrog_step(UNIT, pp(1.0, 0.0), 0.01)
        assert out.q[0] == pytest.approx(0.995, abs=1e-15)
        assert out.p[0] == pytest.approx(-0.09975, abs=1e-15)

    def test_leapfrog_small_step_continuity(self):
        x = pp(0.7, -0.3)
        for theta in (1e-4, 1e-6, 1e-8):
            out = leapfrog_step(UNIT, x, theta)
            move = abs(out.q[0] - x.q[0]) + abs(out.p[0] - x.p[0])
            assert move <= 2.0 * math.sqrt(theta)

    def test_leapfrog_volume_preservation_1d(self):
        # the map is linear for quadratic U, so finite differences recover
        # the exact Jacobian
        pot = make_gaussian([2.5])
        theta, h = 0.04, 1e-3

        def apply(v):
            out = leapfrog_step(pot, pp(v[0], v[1]), theta)
            return np.array([out.q[0], out.p[0]])

        base = np.array([0.3, -0.8])
        jac = np.column_stack([
            (apply(base + e) - apply(base - e)) / (2.0 * h)
            for e in (np.array([h, 0.0]), np.array([0.0, h]))
        ])
        assert abs(abs(np.linalg.det(jac)) - 1.0) <= 1e-12


class TestComposedIntegrator:
    def test_euler_step_count(self):
        spec = IntegratorSpec("euler", theta=0.1, T=0.5)
        assert spec.oracle_steps == 5
        ledger = CostLedger()
        integrate(UNIT, spec, pp(1.0, 0.0), ledger)
        assert ledger.gradient_evals == 5

    def test_leapfrog_step_count(self):
        spec = IntegratorSpec("leapfrog", theta=0.01, T=0.5)
        assert spec.oracle_steps == 5
        ledger = CostLedger()
        integrate(UNIT, spec, pp(1.0, 0.0), ledger)
        assert ledger.gradient_evals == 10

    def test_euler_matches_exact_at_small_theta(self):
        # position gap bounded by 6 theta T (M2/sqrt(m2)) sqrt(H)
        T, theta = 0.25, 1e-4
        x = pp(1.0, 0.5)
        approx = integrate(UNIT, IntegratorSpec("euler", theta=theta, T=T), x)
        exact = exact_gaussian_flow([1.0], x, T)
        bound = 6.0 * theta * T * math.sqrt(hamiltonian(UNIT, x))
        assert np.linalg.norm(approx.q - exact.q) <= bound

    def test_exact_scheme_requires_gaussian(self):
        pot = make_perturbed_quadratic(2, 0.1, seed=0)
        with pytest.raises(IntegratorError):
            integrate(pot, IntegratorSpec("exact_gaussian", T=0.3), pp([1.0, 0.0], [0.0, 0.0]))

    def test_order_must_match_scheme(self):
        with pytest.raises(IntegratorError):
            IntegratorSpec("euler", theta=0.1, T=1.0, order=2)


class TestExactGaussianFlow:
    def test_quarter_period(self):
        out = exact_gaussian_flow([1.0], pp(1.0, 0.0), math.pi / 2.0)
        assert out.q[0] == pytest.approx(0.0, abs=1e-15)
        assert out.p[0] == pytest.approx(-1.0)

    def test_full_period(self):
        x = pp([0.4, -1.2], [0.9, 0.1])
        out = exact_gaussian_flow([1.0, 1.0], x, 2.0 * math.pi)
        np.testing.assert_allclose(out.q, x.q, atol=1e-12)
        np.testing.assert_allclose(out.p, x.p, atol=1e-12)

    def test_energy_conserved(self):
        pot = make_gaussian([1.0, 3.0, 0.5])
        x = pp([1.0, -0.2, 2.0], [0.3, 0.7, -1.1])
        out = exact_gaussian_flow(pot.precision_eigenvalues, x, 10.0)
        assert abs(hamiltonian(pot, out) - hamiltonian(pot, x)) <= 1e-12


class TestReferenceFlow:
    def test_agrees_with_exact_gaussian(self):
        pot = make_gaussian([1.0, 4.0])
        x = pp([1.0, 0.5], [-0.3, 0.8])
        ref = reference_flow(pot, x, 0.35, tol=1e-10)
        exact = exact_gaussian_flow(pot.precision_eigenvalues, x, 0.35)
        assert np.linalg.norm(ref.q - exact.q) <= 1e-9

    def test_energy_conservation(self):
        out = reference_flow(UNIT, pp(1.0, 0.3), 1.0, tol=1e-10)
        assert abs(hamiltonian(UNIT, out) - hamiltonian(UNIT, pp(1.0, 0.3))) <= 1e-9

    def test_cauchy_between_tolerances(self):
        pot = make_perturbed_quadratic(3, 0.2, seed=2)
        x = pp([1.0, -0.5, 0.2], [0.1, 0.4, -0.6])
        a = reference_flow(pot, x, 0.3, tol=1e-6)
        b = reference_flow(pot, x, 0.3, tol=1e-8)
        assert np.linalg.norm(a.q - b.q) <= 1e-6

    def test_zero_time(self):
        x = pp(0.5, -0.5)
        out = reference_flow(UNIT, x, 0.0)
        assert out.q[0] == 0.5 and out.p[0] == -0.5


class TestGuardedStep:
    def setup_method(self):
        self.pot = product_potential(make_perturbed_quadratic(1, 0.1, seed=4), 4)
        self.spec = IntegratorSpec("guarded", theta=0.01, T=0.3)
        self.good = GoodSetSpec(g_inf=10.0, g_2=0.5, block_dim=1)

    def test_inside_runs_leapfrog(self):
        x = pp([0.5, -0.2, 0.1, 0.3], [1.0, 0.5, -0.5, 0.8])
        assert bool(self.good.contains(x))
        out = guarded_step(self.pot, self.spec, self.good, x)
        ref = integrate(self.pot, IntegratorSpec("leapfrog", theta=0.01, T=0.3), x)
        np.testing.assert_array_equal(out.q, ref.q)
        np.testing.assert_array_equal(out.p, ref.p)

    def test_zero_momentum_runs_euler(self):
        x = pp([0.5, -0.2, 0.1, 0.3], [0.0, 0.0, 0.0, 0.0])
        out = guarded_step(self.pot, self.spec, self.good, x)
        ref = integrate(self.pot, IntegratorSpec("euler", theta=0.01, T=0.3), x)
        np.testing.assert_array_equal(out.q, ref.q)
        np.testing.assert_array_equal(out.p, ref.p)

    def test_momentum_floor_is_strict(self):
        # |p| == g_2 exactly fails the strict inequality, so Euler runs
        p = np.zeros(4)
        p[0] = self.good.g_2
        x = PhasePoint(np.array([0.1, 0.0, 0.0, 0.0]), p)
        assert not bool(self.good.contains(x))
        out = guarded_step(self.pot, self.spec, self.good, x)
        ref = integrate(self.pot, IntegratorSpec("euler", theta=0.01, T=0.3), x)
        np.testing.assert_array_equal(out.q, ref.q)

    def test_batch_splits_rows(self):
        q = np.array([[0.5, -0.2, 0.1, 0.3], [0.5, -0.2, 0.1, 0.3]])
        p = np.array([[1.0, 0.5, -0.5, 0.8], [0.0, 0.0, 0.0, 0.0]])
        out = guarded_step(self.pot, self.spec, self.good, PhasePoint(q, p))
        top = guarded_step(self.pot, self.spec, self.good, pp(q[0], p[0]))
        bottom = guarded_step(self.pot, self.spec, self.good, pp(q[1], p[1]))
        np.testing.assert_array_equal(out.q[0], top.q)
        np.testing.assert_array_equal(out.q[1], bottom.q)


class TestEnergyError:
    def test_exact_flow_conserves(self):
        pot = make_gaussian([1.0, 2.0])
        x = pp([1.0, 0.2], [0.1, -0.4])
        assert energy_error(pot, IntegratorSpec("exact_gaussian", T=3.0), x) <= 1e-12

    def test_euler_energy_bound(self):
        # |dH| <= 7 (theta/T) H for 7 theta <= T (Euler error lemma)
        pot = make_perturbed_quadratic(4, 0.2, seed=6)
        T = default_integration_time(pot)
        theta = T / 14.0
        states = sample_states(pot, 200, seed=0)
        err = energy_error(pot, IntegratorSpec("euler", theta=theta, T=T), states)
        bound = 7.0 * (theta / T) * hamiltonian(pot, states)
        assert np.all(err <= bound)

    def test_leapfrog_halving_ratio(self):
        # Algorithm-4 stepping makes leapfrog first order in theta
        pot = make_perturbed_quadratic(2, 0.15, seed=8)
        x = pp([1.2, -0.7], [0.5, 0.9])
        T = 0.3
        theta = (T / 32.0) ** 2
        errs = [float(energy_error(pot, IntegratorSpec("leapfrog", theta=th, T=T), x))
                for th in (theta, theta / 2.0)]
        ratio = errs[1] / errs[0]
        assert 0.3 <= ratio <= 0.7


class TestFlowComparisons:
    """Trajectory-level bounds for pairs of solutions of Hamilton's equations."""

    def test_divergence_bound(self):
        # |q2_t - q1_t| <= k1 e^(t sqrt(M2)) + k2 e^(-t sqrt(M2))
        pot = make_perturbed_quadratic(3, 0.2, seed=10)
        rng = np.random.default_rng(0)
        T = 0.8
        q1, q2 = rng.standard_normal((2, 3))
        p1, p2 = rng.standard_normal((2, 3))
        times, qs, _ = flow_trajectory(pot, PhasePoint(np.array([q1, q2]),
                                                       np.array([p1, p2])), T, 20, tol=1e-10)
        qhat0 = np.linalg.norm(q2 - q1)
        phat0 = np.linalg.norm(p2 - p1)
        root = math.sqrt(pot.M2)
        k1 = 0.5 * (qhat0 + phat0 / root)
        k2 = 0.5 * (qhat0 - phat0 / root)
        for j, t in enumerate(times):
            qhat = np.linalg.norm(qs[j, 1] - qs[j, 0])
            assert qhat <= k1 * math.exp(t * root) + k2 * math.exp(-t * root) + 1e-6

    def test_contraction_sandwich(self):
        # equal momenta: psi(t) <= qhat_t/qhat_0 <= Psi_T(t)
        pot = make_perturbed_quadratic(3, 0.1, seed=12)
        T = default_integration_time(pot)
        rng = np.random.default_rng(1)
        for _ in range(5):
            q1, q2 = rng.standard_normal((2, 3))
            p = rng.standard_normal(3)
            times, qs, _ = flow_trajectory(pot, PhasePoint(np.array([q1, q2]),
                                                           np.array([p, p])), T, 20, tol=1e-10)
            qhat0 = np.linalg.norm(q2 - q1)
            err = math.sinh(T * math.sqrt(pot.M2)) ** 2 / (1.0 - 2.0 * pot.M2 * T * T)
            coeff = -0.5 + (pot.M2 / pot.m2) * err
            for j, t in enumerate(times[1:], start=1):
                ratio = np.linalg.norm(qs[j, 1] - qs[j, 0]) / qhat0
                psi = 1.0 - 2.0 * pot.M2 * t * t
                psi_cap = coeff * 0.5 * pot.m2 * t * t + 1.0
                assert psi - 1e-6 <= ratio <= psi_cap + 1e-6

    def test_endpoint_contraction(self):
        pot = make_perturbed_quadratic(4, 0.2, seed=13)
        T = default_integration_time(pot)
        rng = np.random.default_rng(2)
        q1, q2 = rng.standard_normal((2, 4))
        p = rng.standard_normal(4)
        end = reference_flow(pot, PhasePoint(np.array([q1, q2]), np.array([p, p])), T, 1e-10)
        ratio = np.linalg.norm(end.q[1] - end.q[0]) / np.linalg.norm(q2 - q1)
        assert ratio <= 1.0 - 0.125 * pot.m2 * T * T + 1e-6

    def test_displacement_bound(self):
        # |q_t - q_0| <= (1/2C) e^(-sqrt(C)t)(e^(sqrt(C)t)-1)(...)  with C = M2
        pot = make_perturbed_quadratic(3, 0.2, seed=14)
        rng = np.random.default_rng(3)
        q0 = rng.standard_normal(3)
        p0 = rng.standard_normal(3)
        C = pot.M2
        rt = math.sqrt(C)
        times, qs, _ = flow_trajectory(pot, PhasePoint(q0, p0), 1.0, 20, tol=1e-10)
        nq, npm = np.linalg.norm(q0), np.linalg.norm(p0)
        for j, t in enumerate(times):
            e = math.exp(rt * t)
            bound = (e - 1.0) * (rt * npm * (e + 1.0) + C * nq * (e - 1.0)) / (2.0 * C * e)
            assert np.linalg.norm(qs[j] - q0) <= bound + 1e-6

    def test_euler_position_error_bound(self):
        # 500 starts with H <= 10 d, 7 theta <= T, T/theta integer
        pot = make_perturbed_quadratic(4, 0.2, seed=15)
        T = default_integration_time(pot)
        theta = T / 14.0
        states = sample_states(pot, 500, seed=4)
        approx = integrate(pot, IntegratorSpec("euler", theta=theta, T=T), states)
        exact = reference_flow(pot, states, T, tol=1e-10)
        err = np.linalg.norm(approx.q - exact.q, axis=-1)
        bound = 6.0 * theta * T * (pot.M2 / math.sqrt(pot.m2)) * np.sqrt(
            hamiltonian(pot, states))
        assert np.all(err <= bound)

    def test_leapfrog_error_condition(self):
        # error <= theta K (H^c + 1) with c = 2 and K fit on the coarsest grid point
        pot = make_perturbed_quadratic(2, 0.2, seed=16)
        T = default_integration_time(pot)
        states = sample_states(pot, 50, seed=5)
        h_values = (T / 4.0, T / 8.0, T / 16.0, T / 32.0)
        hs = np.array([hamiltonian(pot, states)]).ravel()
        scale = hs**2 + 1.0
        ks = []
        for h in h_values:
            theta = h * h
            approx = integrate(pot, IntegratorSpec("leapfrog", theta=theta, T=T), states)
            exact = reference_flow(pot, states, T, tol=1e-11)
            err = np.linalg.norm(approx.q - exact.q, axis=-1)
            ks.append(np.max(err / (theta * scale)))
        k_fit = ks[0] * 1.5
        assert all(k <= k_fit for k in ks[1:])
