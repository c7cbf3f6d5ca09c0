"""Tendencies, integrating-factor stepping and trajectory integration."""

import numpy as np
import pytest

from slipchannel.grid import Parity
from slipchannel.fields import (
    BoussinesqState,
    VelocityState,
    boussinesq_balance_residual,
    energy_balance_residual,
    l2_norm,
)
from slipchannel.dynamics import (
    BlowUpError,
    SolverConfig,
    boussinesq_rhs,
    exact_shear_solution,
    integrate,
    nse_rhs,
    step,
)
from slipchannel.spectral import inner, single_mode, zeros

from conftest import random_scalar, random_velocity


def zero_velocity(grid):
    return VelocityState(
        zeros(grid, Parity.EVEN), zeros(grid, Parity.EVEN), zeros(grid, Parity.ODD)
    )


class TestNseRhs:
    def test_shear_tendency_is_pure_diffusion(self, grid):
        # for the shear flow the advective term projects to zero, so the
        # tendency is exactly -nu pi^2 u
        nu = 0.3
        v = exact_shear_solution(0.0, 0.0, grid)
        rhs = nse_rhs(v, nu)
        expected = -nu * np.pi**2
        np.testing.assert_allclose(rhs.u1.coeffs, expected * v.u1.coeffs, atol=1e-13)
        assert l2_norm(rhs.u2) <= 1e-14
        assert l2_norm(rhs.u3) <= 1e-14

    def test_zero_state(self, grid):
        assert l2_norm(nse_rhs(zero_velocity(grid), 1.0)) == 0.0

    def test_projected_advection_is_skew(self, grid, rng):
        # the inviscid tendency does no work: int rhs . v dx = 0
        v = random_velocity(grid, rng)
        rhs = nse_rhs(v, 0.0)
        work = sum(inner(a, b) for a, b in zip(rhs.components(), v.components()))
        assert abs(work) <= 1e-10 * l2_norm(v) ** 3

    def test_tendency_parities_and_divergence(self, grid, rng):
        rhs = nse_rhs(random_velocity(grid, rng), 1e-2)
        assert rhs.divergence_max() < 1e-12


class TestBoussinesqRhs:
    def test_rho_zero_reduces_to_nse(self, grid, rng):
        v = random_velocity(grid, rng)
        s = BoussinesqState(v, zeros(grid, Parity.ODD))
        out = boussinesq_rhs(s, 1e-2, 1e-3)
        ref = nse_rhs(v, 1e-2)
        for a, b in zip(out.vel.components(), ref.components()):
            np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-14)
        assert l2_norm(out.rho) == 0.0

    def test_rest_state_buoyancy_only(self, grid):
        rho = single_mode(grid, Parity.ODD, 1, 0, 1)
        s = BoussinesqState(zero_velocity(grid), rho)
        out = boussinesq_rhs(s, 0.0, 0.0)
        assert l2_norm(out.rho) == 0.0
        # momentum tendency equals P[-rho e3], which is nonzero here
        assert l2_norm(out.vel) > 0.1
        assert out.vel.divergence_max() < 1e-13

    def test_density_advection_conserves_variance(self, grid, rng):
        v = random_velocity(grid, rng)
        rho = random_scalar(grid, Parity.ODD, rng)
        s = BoussinesqState(v, rho)
        out = boussinesq_rhs(s, 0.0, 0.0)
        # remove the buoyancy reaction to isolate the advection work
        work = inner(out.rho, rho)
        assert abs(work) <= 1e-10 * l2_norm(v) * l2_norm(rho) ** 2


class TestStep:
    def test_pure_diffusion_exact(self, grid):
        # single mode with the nonlinear term identically zero
        nu, dt = 0.05, 0.1
        cfg = SolverConfig(grid=grid, nu=nu, dt=dt, t_end=1.0)
        v0 = exact_shear_solution(0.0, 0.0, grid)
        v1 = step(v0, cfg)
        decay = np.exp(-nu * np.pi**2 * dt)
        np.testing.assert_allclose(
            v1.u1.coeffs, decay * v0.u1.coeffs, rtol=1e-14, atol=1e-30
        )

    def test_euler_shear_steady(self, grid):
        cfg = SolverConfig(grid=grid, nu=0.0, dt=0.05, t_end=1.0)
        v0 = exact_shear_solution(0.0, 0.0, grid)
        v1 = step(v0, cfg)
        np.testing.assert_allclose(v1.u1.coeffs, v0.u1.coeffs, atol=1e-15)

    def test_one_step_error_scales_dt5(self, grid, rng):
        v0 = random_velocity(grid, rng)
        errs = []
        for dt in (0.02, 0.01):
            ref_cfg = SolverConfig(grid=grid, nu=1e-2, dt=dt / 16, t_end=dt)
            ref = integrate(v0, ref_cfg, store_fields=True).final_state
            one = step(v0, SolverConfig(grid=grid, nu=1e-2, dt=dt, t_end=dt))
            errs.append(l2_norm(one - ref))
        order = np.log2(errs[0] / errs[1])
        assert 4.5 < order < 5.5


class TestIntegrate:
    def test_shear_closed_form(self, grid):
        nu, t_end = 1e-2, 1.0
        cfg = SolverConfig(grid=grid, nu=nu, dt=1e-2, t_end=t_end, snapshot_interval=10)
        traj = integrate(exact_shear_solution(0.0, nu, grid), cfg)
        exact = exact_shear_solution(t_end, nu, grid)
        assert l2_norm(traj.final_state - exact) <= 1e-10

    def test_zero_initial_data(self, grid):
        cfg = SolverConfig(grid=grid, nu=1e-2, dt=0.05, t_end=0.2)
        traj = integrate(zero_velocity(grid), cfg)
        assert all(l2_norm(s) == 0.0 for _, s in traj.items())

    def test_snapshot_times_and_initial_state(self, grid):
        cfg = SolverConfig(grid=grid, nu=0.0, dt=0.025, t_end=0.4, snapshot_interval=4)
        v0 = exact_shear_solution(0.0, 0.0, grid)
        traj = integrate(v0, cfg)
        np.testing.assert_allclose(traj.times, [0.0, 0.1, 0.2, 0.3, 0.4], atol=1e-12)
        assert l2_norm(traj.states[0] - v0) == 0.0

    def test_energy_conservation_euler(self, grid, rng):
        v0 = random_velocity(grid, rng)
        v0 = v0 * (0.3 / max(v0.max_speed(), 1e-30))
        cfg = SolverConfig(grid=grid, nu=0.0, dt=2e-3, t_end=0.2)
        traj = integrate(v0, cfg)
        e0 = 0.5 * l2_norm(traj.states[0]) ** 2
        drift = max(abs(0.5 * l2_norm(s) ** 2 - e0) for _, s in traj.items())
        assert drift <= 1e-10 * e0

    def test_divergence_stays_clean(self, grid, rng):
        v0 = random_velocity(grid, rng)
        v0 = v0 * (0.3 / max(v0.max_speed(), 1e-30))
        cfg = SolverConfig(grid=grid, nu=1e-3, dt=5e-3, t_end=0.1)
        traj = integrate(v0, cfg)
        assert all(s.divergence_max() <= 1e-11 for _, s in traj.items())

    def test_global_fourth_order(self, grid, rng):
        v0 = random_velocity(grid, rng)
        v0 = v0 * (0.5 / max(v0.max_speed(), 1e-30))
        t_end = 0.2
        ref = integrate(
            v0, SolverConfig(grid=grid, nu=1e-2, dt=t_end / 320, t_end=t_end,
                             snapshot_interval=320)
        ).final_state
        errs = []
        for n in (10, 20, 40):
            traj = integrate(
                v0, SolverConfig(grid=grid, nu=1e-2, dt=t_end / n, t_end=t_end,
                                 snapshot_interval=n)
            )
            errs.append(l2_norm(traj.final_state - ref))
        slope = np.log2(errs[0] / errs[2]) / 2
        assert 3.7 < slope < 4.3

    def test_balance_residual_from_run(self, grid, rng):
        v0 = random_velocity(grid, rng)
        v0 = v0 * (0.4 / max(v0.max_speed(), 1e-30))
        nu = 1e-2
        cfg = SolverConfig(grid=grid, nu=nu, dt=2e-3, t_end=0.2)
        traj = integrate(v0, cfg)
        # Simpson balance from snapshots and the RK-accumulated dissipation
        assert energy_balance_residual(traj.items(), nu) <= 1e-9
        e0 = 0.5 * l2_norm(traj.states[0]) ** 2
        et = 0.5 * l2_norm(traj.final_state) ** 2
        assert et + nu * traj.curl_sq_integral[-1] - e0 == pytest.approx(0.0, abs=1e-9)

    def test_blowup_aborts_with_time(self, grid, rng):
        v0 = random_velocity(grid, rng)
        v0 = v0 * (2.0 / max(v0.max_speed(), 1e-30))
        cfg = SolverConfig(grid=grid, nu=0.0, dt=2.0, t_end=40.0, snapshot_interval=20)
        with pytest.raises(BlowUpError) as exc:
            with pytest.warns(RuntimeWarning, match="CFL"):
                integrate(v0, cfg)
        assert exc.value.time > 0

    def test_boussinesq_balance(self, grid, rng):
        v0 = random_velocity(grid, rng)
        v0 = v0 * (0.3 / max(v0.max_speed(), 1e-30))
        rho0 = random_scalar(grid, Parity.ODD, rng)
        rho0 = rho0 * (0.3 / max(l2_norm(rho0), 1e-30))
        s0 = BoussinesqState(v0, rho0)
        nu, eps = 1e-2, 1e-3
        cfg = SolverConfig(grid=grid, nu=nu, epsilon=eps, dt=2e-3, t_end=0.2)
        traj = integrate(s0, cfg)
        assert boussinesq_balance_residual(traj.items(), nu, eps) <= 1e-9

    def test_density_variance_decays_with_diffusion(self, grid, rng):
        # nu = 0, eps > 0: ||rho||^2 decays monotonically
        rho0 = random_scalar(grid, Parity.ODD, rng)
        s0 = BoussinesqState(zero_velocity(grid), rho0)
        cfg = SolverConfig(grid=grid, nu=0.0, epsilon=1e-2, dt=5e-3, t_end=0.2)
        traj = integrate(s0, cfg)
        norms = [l2_norm(s.rho) for _, s in traj.items()]
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_buoyancy_activates_velocity(self, grid):
        rho0 = single_mode(grid, Parity.ODD, 1, 0, 1, amplitude=0.2)
        s0 = BoussinesqState(zero_velocity(grid), rho0)
        cfg = SolverConfig(grid=grid, nu=0.0, epsilon=0.0, dt=5e-3, t_end=0.1)
        traj = integrate(s0, cfg)
        assert l2_norm(traj.final_state.vel) > 1e-4
        assert boussinesq_balance_residual(traj.items(), 0.0, 0.0) <= 1e-10

    def test_balance_refines_at_fourth_order(self, grid, rng):
        rho0 = random_scalar(grid, Parity.ODD, rng)
        rho0 = rho0 * (1.0 / max(l2_norm(rho0), 1e-30))
        s0 = BoussinesqState(zero_velocity(grid), rho0)
        res = []
        for dt in (2e-2, 1e-2, 5e-3):
            cfg = SolverConfig(grid=grid, nu=0.0, epsilon=0.0, dt=dt, t_end=0.4)
            traj = integrate(s0, cfg)
            res.append(boussinesq_balance_residual(traj.items(), 0.0, 0.0))
        slope = np.log2(res[0] / res[2]) / 2
        assert 3.7 < slope < 4.3


class TestForcing:
    def test_gradient_forcing_is_annihilated(self, grid):
        # a pure-gradient force projects to zero at every stage
        from slipchannel.spectral import derivative, transform_forward

        X, Y, Z = grid.meshgrid()
        phi = transform_forward(np.cos(X) * np.cos(np.pi * Z), Parity.EVEN, grid)

        def forcing(t):
            return VelocityState(
                derivative(phi, "x"), derivative(phi, "y"), derivative(phi, "z")
            )

        v0 = exact_shear_solution(0.0, 0.0, grid)
        cfg = SolverConfig(grid=grid, nu=0.0, dt=0.01, t_end=0.1, forcing=forcing)
        traj = integrate(v0, cfg)
        assert l2_norm(traj.final_state - v0) <= 1e-13

    def test_divergence_free_forcing_injects_energy(self, grid):
        def forcing(t):
            return exact_shear_solution(0.0, 0.0, grid)

        v0 = zero_velocity(grid)
        cfg = SolverConfig(grid=grid, nu=0.0, dt=0.01, t_end=0.1, forcing=forcing)
        traj = integrate(v0, cfg)
        # du/dt = f with u(0) = 0 gives u(T) = T f for a steady force
        expected = 0.1 * l2_norm(forcing(0.0))
        assert l2_norm(traj.final_state) == pytest.approx(expected, rel=1e-12)


class TestWorkerDeterminism:
    def test_transforms_identical_across_worker_counts(self, grid, rng):
        from slipchannel.spectral import (
            get_fft_workers,
            set_fft_workers,
            transform_forward,
        )

        samples = rng.standard_normal(grid.shape)
        saved = get_fft_workers()
        try:
            set_fft_workers(1)
            a = transform_forward(samples, Parity.EVEN, grid).coeffs
            set_fft_workers(2)
            b = transform_forward(samples, Parity.EVEN, grid).coeffs
        finally:
            set_fft_workers(saved)
        np.testing.assert_array_equal(a, b)


class TestExactShear:
    def test_t0(self, grid):
        v = exact_shear_solution(0.0, 0.37, grid)
        assert v.u1.coeffs[0, 0, 1] == 1.0

    def test_euler_steady(self, grid):
        v = exact_shear_solution(5.0, 0.0, grid)
        assert v.u1.coeffs[0, 0, 1] == 1.0

    def test_decay_amplitude(self, grid):
        v = exact_shear_solution(1.0, 0.01, grid)
        # scalar exponential oracle: exp(-0.01 pi^2) ~ 0.906
        assert v.u1.coeffs[0, 0, 1].real == pytest.approx(
            float(np.exp(-0.01 * np.pi**2)), rel=1e-15
        )
        assert 0.90 < v.u1.coeffs[0, 0, 1].real < 0.91


class TestSolverConfig:
    def test_validation(self, grid):
        with pytest.raises(ValueError):
            SolverConfig(grid=grid, nu=-1.0, dt=0.1, t_end=1.0)
        with pytest.raises(ValueError):
            SolverConfig(grid=grid, nu=0.0, dt=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            SolverConfig(grid=grid, nu=0.0, dt=2.0, t_end=1.0)

    def test_step_count_must_divide(self, grid):
        cfg = SolverConfig(grid=grid, nu=0.0, dt=0.3, t_end=1.0)
        with pytest.raises(ValueError):
            cfg.n_steps
